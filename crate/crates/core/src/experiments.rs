//! Convergence, stability and regularity studies built on the particle
//! system and the finite-volume reference solver.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{envelope_bounds, simulate, uniform_times, ParticleState, SimOptions};
use crate::error::{Error, Result};
use crate::flux::{lip_seminorm_difference, theta_ladder, PiecewiseLinearFlux};
use crate::measures::{Kernel, StepFunction};
use crate::pde::{domain_half_width, fv_run, FvTrajectory, GridField};
use crate::quadrature::gauss_legendre8;

/// Shifted empirical CDF of a particle state.
pub fn empirical_cdf(state: &ParticleState) -> StepFunction {
    state.empirical_cdf()
}

/// Non-decreasing initial profile with tails `∓1/2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialCdf {
    /// Single unit jump at `at`.
    Riemann { at: f64 },
    /// Linear ramp from `−1/2` at `lo` to `1/2` at `hi`.
    Ramp { lo: f64, hi: f64 },
    /// `(3s − s³)/4` with `s` the affine map of `[lo, hi]` onto `[−1, 1]`;
    /// continuously differentiable with density vanishing at both ends.
    Smooth { lo: f64, hi: f64 },
    /// Arbitrary step function: `values[0]` left of `breakpoints[0]`, and so on.
    Step { breakpoints: Vec<f64>, values: Vec<f64> },
}

impl InitialCdf {
    pub fn validate(&self) -> Result<()> {
        match self {
            InitialCdf::Riemann { at } if at.is_finite() => Ok(()),
            InitialCdf::Ramp { lo, hi } | InitialCdf::Smooth { lo, hi } if lo < hi && lo.is_finite() && hi.is_finite() => Ok(()),
            InitialCdf::Step { .. } => {
                let f = self.as_step()?;
                if !f.is_non_decreasing() {
                    return Err(Error::NonMonotoneInput("step values decrease".into()));
                }
                if !f.is_shifted_cdf(1e-12) {
                    return Err(Error::NonMonotoneInput("tails must be -1/2 and 1/2".into()));
                }
                Ok(())
            }
            other => Err(Error::NonMonotoneInput(format!("degenerate profile {other:?}"))),
        }
    }

    fn as_step(&self) -> Result<StepFunction> {
        match self {
            InitialCdf::Riemann { at } => Ok(StepFunction::heaviside(*at, -0.5, 0.5)),
            InitialCdf::Step { breakpoints, values } => StepFunction::new(breakpoints.clone(), values.clone()),
            _ => Err(Error::InvalidStepFunction("profile is not piecewise constant".into())),
        }
    }

    /// Exact step-function form, when there is one.
    pub fn step_function(&self) -> Option<StepFunction> {
        self.as_step().ok()
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            InitialCdf::Ramp { lo, hi } => -0.5 + ((x - lo) / (hi - lo)).clamp(0.0, 1.0),
            InitialCdf::Smooth { lo, hi } => {
                let s = ((2.0 * x - lo - hi) / (hi - lo)).clamp(-1.0, 1.0);
                (3.0 * s - s * s * s) / 4.0
            }
            _ => self.as_step().map(|f| f.eval(x)).unwrap_or(f64::NAN),
        }
    }

    /// Smallest interval outside of which the profile is constant.
    pub fn support(&self) -> (f64, f64) {
        match self {
            InitialCdf::Riemann { at } => (*at, *at),
            InitialCdf::Ramp { lo, hi } | InitialCdf::Smooth { lo, hi } => (*lo, *hi),
            InitialCdf::Step { .. } => self
                .as_step()
                .ok()
                .and_then(|f| f.support_of_variation())
                .unwrap_or((0.0, 0.0)),
        }
    }

    /// `inf { x : F(x) ≥ q }` for `q ∈ (−1/2, 1/2)`.
    pub fn quantile(&self, q: f64) -> Result<f64> {
        match self {
            InitialCdf::Ramp { lo, hi } => Ok(lo + (q + 0.5) * (hi - lo)),
            InitialCdf::Smooth { lo, hi } => {
                // 3s − s³ = 4q  ⇔  s = 2 sin(asin(2q)/3)
                let s = 2.0 * ((2.0 * q).clamp(-1.0, 1.0).asin() / 3.0).sin();
                Ok(0.5 * (lo + hi) + 0.5 * s * (hi - lo))
            }
            _ => {
                let f = self.as_step()?;
                let k = f.values().iter().position(|&v| v >= q).ok_or_else(|| {
                    Error::NonMonotoneInput(format!("level {q} never reached"))
                })?;
                if k == 0 {
                    return Err(Error::NonMonotoneInput(format!("level {q} reached at -inf")));
                }
                Ok(f.breakpoints()[k - 1])
            }
        }
    }

    /// Mean of the profile over `[a, b]`; exact for every variant.
    pub fn average(&self, a: f64, b: f64) -> f64 {
        match self {
            InitialCdf::Ramp { lo, hi } | InitialCdf::Smooth { lo, hi } => {
                // polynomial of degree ≤ 3 between the kinks
                let mut cuts = vec![a];
                cuts.extend([*lo, *hi].into_iter().filter(|&c| c > a && c < b));
                cuts.push(b);
                let total: f64 = cuts.windows(2).map(|w| gauss_legendre8(w[0], w[1], |x| self.eval(x))).sum();
                total / (b - a)
            }
            _ => self.as_step().map(|f| f.average(a, b)).unwrap_or(f64::NAN),
        }
    }
}

/// Midpoint-quantile particles with unit weights:
/// `xᵢ = inf { x : F(x) ≥ −1/2 + (i − 1/2)/N }`. Coincident quantiles are
/// separated by `10⁻¹²·spread` so that positions increase strictly.
pub fn initial_data_from_cdf(cdf: &InitialCdf, n: usize) -> Result<ParticleState> {
    cdf.validate()?;
    if n == 0 {
        return Err(Error::InvalidInitialData("need at least one particle".into()));
    }
    let mut x = (0..n)
        .map(|i| cdf.quantile(-0.5 + (i as f64 + 0.5) / n as f64))
        .collect::<Result<Vec<_>>>()?;
    let (lo, hi) = cdf.support();
    let spread = if hi > lo { hi - lo } else { 1.0 };
    for i in 1..n {
        if x[i] <= x[i - 1] {
            x[i] = x[i - 1] + 1e-12 * spread;
        }
    }
    ParticleState::with_unit_weights(x)
}

/// Inputs of a mean-field convergence study.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceSpec {
    pub cdf: InitialCdf,
    pub kernel: Kernel,
    pub t_final: f64,
    /// Particle counts to compare.
    pub ns: Vec<usize>,
    /// Reference particle count.
    pub n_ref: usize,
    /// Number of snapshot intervals on `[0, T]`.
    pub snapshots: usize,
    /// Particle time step.
    pub dt: f64,
    /// Finite-volume cell widths; empty skips the PDE comparison.
    pub dxs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub n: usize,
    /// `sup_t ‖F_N − F_{N_ref}‖₁`.
    pub dist_ref: f64,
    /// `sup_t ‖F_N − F_Δx‖₁`, one per cell width.
    pub dist_fv: Vec<f64>,
}

/// Least-squares fit `d ≈ κ₁/N + κ₂Δx`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateFit {
    pub kappa1: f64,
    pub kappa2: f64,
    pub r_squared: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub rows: Vec<ConvergenceRow>,
    pub dxs: Vec<f64>,
    pub fv_self: Vec<f64>,
    pub fit: Option<RateFit>,
    /// `dist_ref` strictly decreasing along increasing `N`.
    pub monotone_ref: bool,
    /// Log-log slope of `dist_ref` against `N`.
    pub ref_slope: f64,
}

/// Snapshot trajectory of the particle system started from `cdf`.
pub fn particle_run(cdf: &InitialCdf, n: usize, k: &Kernel, t_final: f64, times: &[f64], dt: f64) -> Result<Vec<ParticleState>> {
    let init = initial_data_from_cdf(cdf, n)?;
    let opts = SimOptions::for_horizon(t_final).with_dt(dt);
    simulate(&init, k, t_final, times, &opts)
}

/// Finite-volume run from `cdf` on the domain `L = 2R̄ + r`, with `R̄`
/// taken from the envelope of the unit-weight data.
pub fn fv_reference(cdf: &InitialCdf, k: &Kernel, t_final: f64, dx: f64) -> Result<FvTrajectory> {
    cdf.validate()?;
    let (lo, hi) = cdf.support();
    let x_bar = lo.abs().max(hi.abs());
    let m_bar = (k.sup_norms().s * t_final).exp();
    let r_bar = x_bar + m_bar * t_final;
    let half_width = domain_half_width(r_bar, k.radius());
    let field = GridField::from_cell_averages(half_width, dx, (-0.5, 0.5), |a, b| cdf.average(a, b))?;
    fv_run(field, k, t_final)
}

fn sup_distance(a: &[StepFunction], b: &[StepFunction]) -> Result<f64> {
    let mut worst = 0.0f64;
    for (f, g) in a.iter().zip(b) {
        worst = worst.max(f.l1_distance(g)?);
    }
    Ok(worst)
}

/// Runs every particle count and cell width (in parallel) and tabulates
/// sup-in-time L¹ distances against the reference particle run and against
/// each finite-volume solution.
pub fn meanfield_convergence(spec: &ConvergenceSpec) -> Result<ConvergenceReport> {
    let times = uniform_times(spec.t_final, spec.snapshots.max(1));
    let mut counts: Vec<usize> = spec.ns.clone();
    counts.push(spec.n_ref);
    counts.sort_unstable();
    counts.dedup();
    let particle: BTreeMap<usize, Vec<StepFunction>> = counts
        .par_iter()
        .map(|&n| {
            let traj = particle_run(&spec.cdf, n, &spec.kernel, spec.t_final, &times, spec.dt)?;
            Ok((n, traj.iter().map(|s| s.empirical_cdf()).collect()))
        })
        .collect::<Result<_>>()?;
    let fv: Vec<Vec<StepFunction>> = spec
        .dxs
        .par_iter()
        .map(|&dx| {
            let traj = fv_reference(&spec.cdf, &spec.kernel, spec.t_final, dx)?;
            Ok(times.iter().map(|&t| traj.at(t).to_step()).collect())
        })
        .collect::<Result<_>>()?;
    let reference = &particle[&spec.n_ref];
    let mut rows = Vec::with_capacity(spec.ns.len());
    let mut ns = spec.ns.clone();
    ns.sort_unstable();
    ns.dedup();
    for &n in &ns {
        let traj = &particle[&n];
        let dist_ref = sup_distance(traj, reference)?;
        let dist_fv = fv.iter().map(|g| sup_distance(traj, g)).collect::<Result<Vec<_>>>()?;
        rows.push(ConvergenceRow { n, dist_ref, dist_fv });
    }
    let fv_self = fv
        .windows(2)
        .map(|w| sup_distance(&w[0], &w[1]))
        .collect::<Result<Vec<_>>>()?;
    let mut points = Vec::new();
    for row in &rows {
        for (j, &dx) in spec.dxs.iter().enumerate() {
            points.push((row.n as f64, dx, row.dist_fv[j]));
        }
    }
    let fit = if points.len() >= 3 { fit_rate(&points) } else { None };
    let monotone_ref = rows
        .iter()
        .filter(|r| r.n != spec.n_ref)
        .collect::<Vec<_>>()
        .windows(2)
        .all(|w| w[1].dist_ref < w[0].dist_ref);
    let slope_pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.n != spec.n_ref && r.dist_ref > 0.0)
        .map(|r| ((r.n as f64).ln(), r.dist_ref.ln()))
        .collect();
    Ok(ConvergenceReport {
        rows,
        dxs: spec.dxs.clone(),
        fv_self,
        fit,
        monotone_ref,
        ref_slope: loglog_slope(&slope_pts),
    })
}

/// Ordinary least-squares slope.
pub fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    if points.len() < 2 {
        return f64::NAN;
    }
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Fits `d ≈ κ₁/N + κ₂Δx` to `(N, Δx, d)` triples by least squares.
pub fn fit_rate(points: &[(f64, f64, f64)]) -> Option<RateFit> {
    let (mut a11, mut a12, mut a22, mut b1, mut b2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(n, dx, d) in points {
        let u = 1.0 / n;
        a11 += u * u;
        a12 += u * dx;
        a22 += dx * dx;
        b1 += u * d;
        b2 += dx * d;
    }
    let det = a11 * a22 - a12 * a12;
    if det.abs() < 1e-300 {
        return None;
    }
    let kappa1 = (b1 * a22 - b2 * a12) / det;
    let kappa2 = (a11 * b2 - a12 * b1) / det;
    let mean = points.iter().map(|p| p.2).sum::<f64>() / points.len() as f64;
    let ss_tot: f64 = points.iter().map(|p| (p.2 - mean).powi(2)).sum();
    let ss_res: f64 = points
        .iter()
        .map(|&(n, dx, d)| (d - kappa1 / n - kappa2 * dx).powi(2))
        .sum();
    Some(RateFit {
        kappa1,
        kappa2,
        r_squared: if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 },
    })
}

/// `R = max(r, R̄)` for the stability and regularity constants.
fn support_radius(k: &Kernel, r_bar: f64) -> f64 {
    k.radius().max(r_bar)
}

/// `4R‖φ‖∞ + 4R(r + R)‖φ′‖∞ + 8R²‖φ′‖∞`.
pub fn stability_ceiling(k: &Kernel, r_bar: f64) -> f64 {
    let big_r = support_radius(k, r_bar);
    let n = k.sup_norms();
    4.0 * big_r * n.phi + 4.0 * big_r * (k.radius() + big_r) * n.dphi + 8.0 * big_r * big_r * n.dphi
}

/// `‖F(t) − F̃(t)‖₁` at matching snapshots.
pub fn trajectory_distances(a: &[ParticleState], b: &[ParticleState]) -> Result<Vec<f64>> {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.empirical_cdf().l1_distance(&y.empirical_cdf()))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    pub times: Vec<f64>,
    pub distances: Vec<f64>,
    pub ratios: Vec<f64>,
    /// Smallest `Ĉ` with `ρ(t) ≤ e^{Ĉt}` at every snapshot.
    pub c_hat: f64,
    pub ceiling: f64,
    pub pass: bool,
}

/// Runs both initial data with the same kernel and measures the growth of
/// their L¹ distance.
pub fn stability_check(
    a: &ParticleState,
    b: &ParticleState,
    k: &Kernel,
    t_final: f64,
    times: &[f64],
    opts: &SimOptions,
) -> Result<StabilityReport> {
    let d0 = a.empirical_cdf().l1_distance(&b.empirical_cdf())?;
    if d0 < 1e-14 {
        return Err(Error::ZeroInitialDistance(d0));
    }
    let (ta, tb) = rayon::join(
        || simulate(a, k, t_final, times, opts),
        || simulate(b, k, t_final, times, opts),
    );
    let (ta, tb) = (ta?, tb?);
    let distances = trajectory_distances(&ta, &tb)?;
    let ratios: Vec<f64> = distances.iter().map(|d| d / d0).collect();
    let times: Vec<f64> = ta.iter().map(|s| s.t()).collect();
    let c_hat = times
        .iter()
        .zip(&ratios)
        .filter(|(t, _)| **t > 0.0)
        .map(|(t, r)| if *r > 0.0 { r.ln() / t } else { f64::NEG_INFINITY })
        .fold(f64::NEG_INFINITY, f64::max);
    let r_bar = envelope_bounds(a, k, t_final).1.max(envelope_bounds(b, k, t_final).1);
    let ceiling = stability_ceiling(k, r_bar);
    Ok(StabilityReport {
        times,
        distances,
        ratios,
        c_hat,
        ceiling,
        pass: c_hat <= ceiling,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FluxPerturbationReport {
    /// `sup_t |A_N − A_{2N}|_Lip` on the merged ladder.
    pub lip_gap: f64,
    /// `sup_t |A_N − A|_Lip`.
    pub lip_to_exact: f64,
    pub initial_distance: f64,
    /// `(t, ‖F_N − F_{2N}‖₁, bound)` per snapshot.
    pub rows: Vec<(f64, f64, f64)>,
    pub pass: bool,
}

/// Checks `‖F_N(t) − F_{2N}(t)‖₁ ≤ e^{Ct}(‖F_N^in − F_{2N}^in‖₁ + t·gap)`
/// with `C = max(c, 0)` and `gap` the measured flux Lipschitz gap.
pub fn flux_perturbation_check(coarse: &[ParticleState], fine: &[ParticleState], c: f64) -> Result<FluxPerturbationReport> {
    let mut lip_gap = 0.0f64;
    let mut lip_to_exact = 0.0f64;
    for (a, b) in coarse.iter().zip(fine) {
        let fa = PiecewiseLinearFlux::new(theta_ladder(a));
        let fb = PiecewiseLinearFlux::new(theta_ladder(b));
        lip_gap = lip_gap.max(lip_seminorm_difference(&fa, &fb));
        lip_to_exact = lip_to_exact.max(fa.ladder().max_gap());
    }
    let distances = trajectory_distances(coarse, fine)?;
    let d0 = distances.first().copied().unwrap_or(0.0);
    let c = c.max(0.0);
    let rows: Vec<(f64, f64, f64)> = coarse
        .iter()
        .zip(&distances)
        .map(|(s, &d)| {
            let t = s.t();
            (t, d, (c * t).exp() * (d0 + t * lip_gap))
        })
        .collect();
    let pass = rows.iter().all(|&(_, d, bound)| d <= bound * (1.0 + 1e-9) + 1e-14);
    Ok(FluxPerturbationReport {
        lip_gap,
        lip_to_exact,
        initial_distance: d0,
        rows,
        pass,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeLipschitzReport {
    pub max_ratio: f64,
    /// `c = M̄² + 2RC(1 + M̄)` with `C = ‖S‖∞ M̄`.
    pub constant: f64,
    pub pairs: usize,
    pub pass: bool,
}

/// `c = M̄² + 2RC(1 + M̄)`, `C = ‖S‖∞ M̄`, `R = max(r, R̄)`.
pub fn time_lipschitz_constant(initial: &ParticleState, k: &Kernel, t_final: f64) -> f64 {
    let (m_bar, r_bar) = envelope_bounds(initial, k, t_final);
    let c = k.sup_norms().s * m_bar;
    m_bar * m_bar + 2.0 * support_radius(k, r_bar) * c * (1.0 + m_bar)
}

/// Largest `‖F_N(t) − F_N(s)‖₁ / |t − s|` over all snapshot pairs, checked
/// against the constant with 5% slack.
pub fn time_lipschitz_check(traj: &[ParticleState], k: &Kernel, t_final: f64) -> Result<TimeLipschitzReport> {
    let cdfs: Vec<StepFunction> = traj.iter().map(|s| s.empirical_cdf()).collect();
    let mut max_ratio = 0.0f64;
    let mut pairs = 0;
    for i in 0..traj.len() {
        for j in i + 1..traj.len() {
            let dt = traj[j].t() - traj[i].t();
            if dt <= 0.0 {
                continue;
            }
            max_ratio = max_ratio.max(cdfs[i].l1_distance(&cdfs[j])? / dt);
            pairs += 1;
        }
    }
    let constant = traj
        .first()
        .map(|s| time_lipschitz_constant(s, k, t_final))
        .unwrap_or(0.0);
    Ok(TimeLipschitzReport {
        max_ratio,
        constant,
        pairs,
        pass: max_ratio <= 1.05 * constant,
    })
}

/// `F(t, x) = ∓1/2` for every `|x| > R̄`: all particles inside `[−R̄, R̄]`
/// and the CDF reaching exactly `1/2`.
pub fn tails_outside(state: &ParticleState, r_bar: f64) -> bool {
    let f = state.empirical_cdf();
    let inside = f
        .support_of_variation()
        .is_none_or(|(lo, hi)| lo >= -r_bar && hi <= r_bar);
    inside && f.left_tail() == -0.5 && f.right_tail() == 0.5
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empirical_cdf_examples() {
        let s = ParticleState::new(vec![-1.0, 1.0], vec![1.0, 1.0]).unwrap();
        let f = empirical_cdf(&s);
        assert_eq!(f.breakpoints(), &[-1.0, 1.0]);
        assert_eq!(f.values(), &[-0.5, 0.0, 0.5]);
        let s = ParticleState::new(vec![0.2], vec![1.0]).unwrap();
        assert_eq!(empirical_cdf(&s).jumps().collect::<Vec<_>>(), vec![(0.2, 1.0)]);
        let s = ParticleState::new(vec![-1.0, 1.0], vec![1.0, 1.0]).unwrap();
        let opts = SimOptions::for_horizon(3.0).with_dt(0.01);
        let end = simulate(&s, &Kernel::zero(), 3.0, &[], &opts).unwrap().pop().unwrap();
        let jumps: Vec<_> = empirical_cdf(&end).jumps().collect();
        assert_eq!(jumps.len(), 1);
        assert!(jumps[0].0.abs() < 1e-9 && jumps[0].1 == 1.0);
    }

    #[test]
    fn quantile_examples() {
        let ramp = InitialCdf::Ramp { lo: 0.0, hi: 1.0 };
        let s = initial_data_from_cdf(&ramp, 4).unwrap();
        for (i, x) in s.x().iter().enumerate() {
            assert!((x - (i as f64 + 0.5) / 4.0).abs() < 1e-15);
        }
        let single = initial_data_from_cdf(&ramp, 1).unwrap();
        assert!((single.x()[0] - 0.5).abs() < 1e-15);
        let jump = InitialCdf::Riemann { at: 0.3 };
        let s = initial_data_from_cdf(&jump, 5).unwrap();
        assert_eq!(s.x()[0], 0.3);
        for i in 1..5 {
            assert!(s.x()[i] > s.x()[i - 1]);
            assert!(s.x()[i] - 0.3 < 1e-11);
        }
        let smooth = InitialCdf::Smooth { lo: -1.0, hi: 1.0 };
        for q in [-0.4, -0.1, 0.0, 0.3] {
            let x = smooth.quantile(q).unwrap();
            assert!((smooth.eval(x) - q).abs() < 1e-14);
        }
    }

    #[test]
    fn non_monotone_rejected() {
        let bad = InitialCdf::Step {
            breakpoints: vec![0.0, 1.0],
            values: vec![-0.5, 0.4, 0.5 - 1.0],
        };
        assert!(matches!(initial_data_from_cdf(&bad, 3), Err(Error::NonMonotoneInput(_))));
    }

    #[test]
    fn quantile_sampling_error_is_order_one_over_n() {
        let ramp = InitialCdf::Ramp { lo: -1.0, hi: 1.0 };
        for n in [4, 16, 64] {
            let f = initial_data_from_cdf(&ramp, n).unwrap().empirical_cdf();
            // exact L¹ distance between the staircase and the ramp: width/(4N)
            let g = GridField::from_cell_averages(2.0, 1e-4, (-0.5, 0.5), |a, b| ramp.average(a, b)).unwrap();
            let d = f.l1_distance(&g.to_step()).unwrap();
            assert!((d - 2.0 / (4.0 * n as f64)).abs() < 1e-3, "n={n} d={d}");
        }
    }

    #[test]
    fn smooth_average_is_exact() {
        let c = InitialCdf::Smooth { lo: -1.0, hi: 1.0 };
        // antiderivative of (3x − x³)/4 on [−1, 1] is odd, so mean over [0, 1] is 5/16
        assert!((c.average(0.0, 1.0) - 5.0 / 16.0).abs() < 1e-15);
        assert!((c.average(1.0, 2.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn rate_fit_recovers_exact_model() {
        let mut pts = Vec::new();
        for n in [8.0, 16.0, 32.0] {
            for dx in [0.1, 0.05] {
                pts.push((n, dx, 0.3 / n + 0.7 * dx));
            }
        }
        let fit = fit_rate(&pts).unwrap();
        assert!((fit.kappa1 - 0.3).abs() < 1e-12);
        assert!((fit.kappa2 - 0.7).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_distance_rejected() {
        let s = ParticleState::with_unit_weights(vec![-1.0, 1.0]).unwrap();
        let opts = SimOptions::for_horizon(1.0);
        let err = stability_check(&s, &s, &Kernel::zero(), 1.0, &[0.5], &opts).unwrap_err();
        assert!(matches!(err, Error::ZeroInitialDistance(_)));
    }

    #[test]
    fn shifted_riemann_contracts() {
        let a = initial_data_from_cdf(&InitialCdf::Riemann { at: 0.0 }, 8).unwrap();
        let b = initial_data_from_cdf(&InitialCdf::Riemann { at: 0.1 }, 8).unwrap();
        let opts = SimOptions::for_horizon(1.0).with_dt(0.01);
        let times = uniform_times(1.0, 10);
        let r = stability_check(&a, &b, &Kernel::zero(), 1.0, &times, &opts).unwrap();
        assert!(r.c_hat <= 1e-9);
        assert!(r.distances.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    }

    #[test]
    fn time_lipschitz_two_particles() {
        let s = ParticleState::with_unit_weights(vec![-1.0, 1.0]).unwrap();
        let opts = SimOptions::for_horizon(1.5).with_dt(0.01);
        let traj = simulate(&s, &Kernel::zero(), 1.5, &uniform_times(1.5, 15), &opts).unwrap();
        let r = time_lipschitz_check(&traj, &Kernel::zero(), 1.5).unwrap();
        assert!((r.max_ratio - 0.5).abs() < 1e-12, "{}", r.max_ratio);
        assert_eq!(r.constant, 1.0);
        assert!(r.pass);
        let frozen = ParticleState::with_unit_weights(vec![0.0]).unwrap();
        let traj = simulate(&frozen, &Kernel::zero(), 1.0, &uniform_times(1.0, 10), &opts).unwrap();
        assert_eq!(time_lipschitz_check(&traj, &Kernel::zero(), 1.0).unwrap().max_ratio, 0.0);
    }

    #[test]
    fn flux_perturbation_degenerate_and_zero_kernel() {
        let cdf = InitialCdf::Smooth { lo: -1.0, hi: 1.0 };
        let times = uniform_times(1.0, 10);
        let a = particle_run(&cdf, 16, &Kernel::zero(), 1.0, &times, 0.01).unwrap();
        let same = flux_perturbation_check(&a, &a, 0.0).unwrap();
        assert_eq!(same.lip_gap, 0.0);
        assert!(same.rows.iter().all(|r| r.1 == 0.0 && r.2 == 0.0));
        let b = particle_run(&cdf, 32, &Kernel::zero(), 1.0, &times, 0.01).unwrap();
        let r = flux_perturbation_check(&a, &b, 0.0).unwrap();
        assert!(r.pass, "{r:?}");
        assert!(r.lip_gap <= 2.0 * (2.0 / 16.0) / (1.0 / 32.0));
    }
}
