use approx::assert_abs_diff_eq;
use proptest::prelude::*;

use opinion_flow::dynamics::{simulate, uniform_times, velocity, weight_rhs, ParticleState, SimOptions};
use opinion_flow::entropy::{discrete_source, source_profile};
use opinion_flow::experiments::{initial_data_from_cdf, InitialCdf};
use opinion_flow::measures::{convolve_step, Derivative, Kernel, StepFunction};

fn sorted_positions(n: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0f64..3.0, n).prop_map(|mut v| {
        v.sort_by(f64::total_cmp);
        for i in 1..v.len() {
            if v[i] <= v[i - 1] {
                v[i] = v[i - 1] + 1e-6;
            }
        }
        v
    })
}

fn state(n: std::ops::Range<usize>) -> impl Strategy<Value = ParticleState> {
    sorted_positions(n).prop_flat_map(|x| {
        let n = x.len();
        (Just(x), prop::collection::vec(0.2f64..2.0, n)).prop_map(|(x, mut m)| {
            let mean = m.iter().sum::<f64>() / m.len() as f64;
            m.iter_mut().for_each(|v| *v /= mean);
            ParticleState::new(x, m).unwrap()
        })
    })
}

fn kernel() -> impl Strategy<Value = Kernel> {
    (0.1f64..3.0, 0.1f64..2.0).prop_map(|(k, r)| Kernel::odd_bump(k, r).unwrap())
}

fn cdf() -> impl Strategy<Value = StepFunction> {
    state(1..20).prop_map(|s| s.empirical_cdf())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn l1_is_a_metric(f in cdf(), g in cdf(), h in cdf()) {
        let fg = f.l1_distance(&g).unwrap();
        prop_assert!(fg >= 0.0);
        prop_assert_eq!(f.l1_distance(&f).unwrap(), 0.0);
        prop_assert!((fg - g.l1_distance(&f).unwrap()).abs() <= 1e-12 * (1.0 + fg));
        let via = f.l1_distance(&h).unwrap() + h.l1_distance(&g).unwrap();
        prop_assert!(fg <= via + 1e-12);
    }

    #[test]
    fn kernel_is_odd(k in kernel(), x in -3.0f64..3.0) {
        prop_assert_eq!(k.s(-x), -k.s(x));
        prop_assert_eq!(k.phi(-x), k.phi(x));
        prop_assert!(k.eval(x, Derivative::Value).abs() <= k.sup_norms().s * (1.0 + 1e-9));
    }

    #[test]
    fn convolution_derivative_matches_difference(k in kernel(), f in cdf(), z in -4.0f64..4.0) {
        let h = 1e-5;
        let fd = (convolve_step(&k, &f, z + h, 0).unwrap() - convolve_step(&k, &f, z - h, 0).unwrap()) / (2.0 * h);
        let d = convolve_step(&k, &f, z, 1).unwrap();
        prop_assert!((fd - d).abs() < 1e-5 * (1.0 + d.abs()), "fd={fd} d={d}");
    }

    #[test]
    fn velocity_matches_double_sum(s in state(1..40)) {
        let v = velocity(&s);
        let (x, m, n) = (s.x(), s.m(), s.n() as f64);
        for i in 0..s.n() {
            let naive: f64 = x.iter().zip(m).map(|(xj, mj)| {
                mj * if *xj > x[i] { 1.0 } else if *xj < x[i] { -1.0 } else { 0.0 }
            }).sum::<f64>() / n;
            assert_abs_diff_eq!(v[i], naive, epsilon = 1e-13);
        }
    }

    #[test]
    fn weight_rhs_sums_to_zero(s in state(1..40), k in kernel()) {
        let total: f64 = weight_rhs(&s, &k).iter().sum();
        prop_assert!(total.abs() < 1e-13);
    }

    #[test]
    fn closed_form_source_matches_double_sum(s in state(1..25), k in kernel(), x in -4.0f64..4.0) {
        let f = s.empirical_cdf();
        let profile = source_profile(&f, &k);
        prop_assert!((profile.eval(x) - discrete_source(&s, &k, x)).abs() < 1e-12);
    }

    #[test]
    fn dynamics_invariants(s in state(2..30), k in kernel(), t_final in 0.1f64..1.5) {
        let opts = SimOptions::for_horizon(t_final).with_dt(t_final / 50.0);
        let traj = simulate(&s, &k, t_final, &uniform_times(t_final, 10), &opts).unwrap();
        let mut clusters = s.n_clusters();
        for snap in &traj {
            prop_assert!((snap.mean_mass() - 1.0).abs() <= 1e-12);
            prop_assert!(snap.x().windows(2).all(|w| w[0] <= w[1]));
            prop_assert!(snap.n_clusters() <= clusters);
            clusters = snap.n_clusters();
            let f = snap.empirical_cdf();
            prop_assert!(f.is_shifted_cdf(1e-12));
        }
        prop_assert!(traj.last().unwrap().events().len() < s.n());
    }

    #[test]
    fn quantile_data_is_sorted(lo in -2.0f64..0.0, w in 0.1f64..3.0, n in 1usize..200) {
        for c in [InitialCdf::Ramp { lo, hi: lo + w }, InitialCdf::Smooth { lo, hi: lo + w }, InitialCdf::Riemann { at: lo }] {
            let s = initial_data_from_cdf(&c, n).unwrap();
            prop_assert_eq!(s.n(), n);
            prop_assert!(s.x().windows(2).all(|p| p[0] < p[1]));
        }
    }
}
