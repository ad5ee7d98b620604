use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::quadrature::adaptive_gauss_legendre;

/// `exp(−1/(1 − u²))` on `(−1, 1)`, zero elsewhere, with its derivative.
fn bump(u: f64) -> (f64, f64) {
    let q = 1.0 - u * u;
    if q <= 0.0 || 1.0 / q > 745.0 {
        return (0.0, 0.0);
    }
    let e = (-1.0 / q).exp();
    (e, -2.0 * u * e / (q * q))
}

/// `∫ bump`.
fn bump_mass() -> f64 {
    static MASS: OnceLock<f64> = OnceLock::new();
    *MASS.get_or_init(|| adaptive_gauss_legendre(-1.0, 1.0, 1e-14, 1e-16, &mut |u| bump(u).0))
}

/// Unit-mass mollifier `b_ε(u) = bump(u/ε) / (ε ∫bump)` and its derivative.
pub fn mollifier(eps: f64, u: f64) -> (f64, f64) {
    let c = 1.0 / (eps * bump_mass());
    let (b, db) = bump(u / eps);
    (c * b, c * db / eps)
}

/// Smooth step: 0 for `s ≤ 0`, 1 for `s ≥ 1`, with derivative.
fn smooth_step(s: f64) -> (f64, f64) {
    if s <= 0.0 {
        return (0.0, 0.0);
    }
    if s >= 1.0 {
        return (1.0, 0.0);
    }
    let f = |v: f64| if v <= 0.0 { (0.0, 0.0) } else { let e = (-1.0 / v).exp(); (e, e / (v * v)) };
    let (a, da) = f(s);
    let (b, db) = f(1.0 - s);
    let den = a + b;
    (a / den, (da * b + a * db) / (den * den))
}

/// Width of the smooth shoulder of the spatial cutoff `g`.
pub const CUTOFF_SHOULDER: f64 = 1.0;

/// `g = 1` on `[−R, R]`, decaying smoothly to zero on `R ≤ |u| ≤ R + 1`.
pub fn cutoff(radius: f64, u: f64) -> (f64, f64) {
    let d = u.abs() - radius;
    if d <= 0.0 {
        return (1.0, 0.0);
    }
    let (v, dv) = smooth_step(1.0 - d / CUTOFF_SHOULDER);
    (v, -dv / CUTOFF_SHOULDER * u.signum())
}

/// Trapezoid equal to one on `[σ, τ]` with linear ramps of width `δ`.
pub fn trapezoid(sigma: f64, tau: f64, delta: f64, v: f64) -> (f64, f64) {
    if v <= sigma - delta || v >= tau + delta {
        (0.0, 0.0)
    } else if v < sigma {
        ((v - sigma + delta) / delta, 1.0 / delta)
    } else if v <= tau {
        (1.0, 0.0)
    } else {
        ((tau + delta - v) / delta, -1.0 / delta)
    }
}

/// Parameters of a product-form test function
/// `χ(t,x) = b_ε((x−y)/2) b_ε((t−s)/2) g((x+y)/2) h_δ((t+s)/2)`
/// with fixed anchor `(s, y)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DoublingParams {
    pub sigma: f64,
    pub tau: f64,
    pub delta: f64,
    pub eps: f64,
    pub radius: f64,
    pub anchor_t: f64,
    pub anchor_x: f64,
}

/// Space-time test function with analytic partial derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TestFunction {
    /// `bump((t−t0)/rt) · bump((x−x0)/rx)`.
    Bump { t0: f64, x0: f64, rt: f64, rx: f64 },
    Doubling(DoublingParams),
}

/// `(χ, ∂ₜχ, ∂ₓχ)` at one point.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Jet {
    pub value: f64,
    pub dt: f64,
    pub dx: f64,
}

impl TestFunction {
    pub fn jet(&self, t: f64, x: f64) -> Jet {
        match *self {
            TestFunction::Bump { t0, x0, rt, rx } => {
                let (bt, dbt) = bump((t - t0) / rt);
                let (bx, dbx) = bump((x - x0) / rx);
                Jet {
                    value: bt * bx,
                    dt: dbt / rt * bx,
                    dx: bt * dbx / rx,
                }
            }
            TestFunction::Doubling(p) => {
                let (b1, db1) = mollifier(p.eps, 0.5 * (x - p.anchor_x));
                let (g, dg) = cutoff(p.radius, 0.5 * (x + p.anchor_x));
                let (b2, db2) = mollifier(p.eps, 0.5 * (t - p.anchor_t));
                let (h, dh) = trapezoid(p.sigma, p.tau, p.delta, 0.5 * (t + p.anchor_t));
                let space = b1 * g;
                let time = b2 * h;
                Jet {
                    value: space * time,
                    dt: space * 0.5 * (db2 * h + b2 * dh),
                    dx: 0.5 * (db1 * g + b1 * dg) * time,
                }
            }
        }
    }

    pub fn value(&self, t: f64, x: f64) -> f64 {
        self.jet(t, x).value
    }

    /// Open time interval outside of which `χ` vanishes.
    pub fn time_support(&self) -> (f64, f64) {
        match *self {
            TestFunction::Bump { t0, rt, .. } => (t0 - rt, t0 + rt),
            TestFunction::Doubling(p) => {
                let lo = (p.anchor_t - 2.0 * p.eps).max(2.0 * (p.sigma - p.delta) - p.anchor_t);
                let hi = (p.anchor_t + 2.0 * p.eps).min(2.0 * (p.tau + p.delta) - p.anchor_t);
                (lo, hi.max(lo))
            }
        }
    }

    /// Open spatial interval outside of which `χ` vanishes.
    pub fn space_support(&self) -> (f64, f64) {
        match *self {
            TestFunction::Bump { x0, rx, .. } => (x0 - rx, x0 + rx),
            TestFunction::Doubling(p) => {
                let shoulder = p.radius + CUTOFF_SHOULDER;
                let lo = (p.anchor_x - 2.0 * p.eps).max(-2.0 * shoulder - p.anchor_x);
                let hi = (p.anchor_x + 2.0 * p.eps).min(2.0 * shoulder - p.anchor_x);
                (lo, hi.max(lo))
            }
        }
    }

    /// Times inside the support where `∂ₜχ` jumps.
    pub fn time_kinks(&self) -> Vec<f64> {
        match *self {
            TestFunction::Bump { .. } => vec![],
            TestFunction::Doubling(p) => {
                let (lo, hi) = self.time_support();
                [p.sigma - p.delta, p.sigma, p.tau, p.tau + p.delta]
                    .into_iter()
                    .map(|v| 2.0 * v - p.anchor_t)
                    .filter(|&t| t > lo && t < hi)
                    .collect()
            }
        }
    }
}

/// A Kruzkov constant paired with a test function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntropyProbe {
    pub alpha: f64,
    pub chi: TestFunction,
}

impl EntropyProbe {
    /// Rejects probes whose time support is not inside `(0, T)`.
    pub fn check_window(&self, t_final: f64) -> Result<()> {
        let (lo, hi) = match self.chi {
            TestFunction::Bump { .. } => self.chi.time_support(),
            TestFunction::Doubling(p) => (p.sigma - p.delta, p.tau + p.delta),
        };
        if !(lo > 0.0 && hi < t_final) {
            return Err(Error::ProbeOutOfWindow { lo, hi, t_final });
        }
        Ok(())
    }

    /// Report columns `(sigma, tau, epsilon, delta)`. For plain bumps these
    /// are the time support and the two radii.
    pub fn window_columns(&self) -> (f64, f64, f64, f64) {
        match self.chi {
            TestFunction::Bump { t0, rt, rx, .. } => (t0 - rt, t0 + rt, rx, rt),
            TestFunction::Doubling(p) => (p.sigma, p.tau, p.eps, p.delta),
        }
    }
}

/// Product-form probe; requires `0 < ε + δ < min(σ, T − τ)` and `σ ≤ τ`.
pub fn make_doubling_probe(
    alpha: f64,
    params: DoublingParams,
    t_final: f64,
) -> Result<EntropyProbe> {
    let DoublingParams { sigma, tau, delta, eps, radius, .. } = params;
    if !(eps > 0.0 && delta > 0.0 && radius >= 0.0 && sigma <= tau && alpha.is_finite()) {
        return Err(Error::Parse(format!(
            "invalid doubling probe: sigma={sigma} tau={tau} delta={delta} eps={eps} R={radius}"
        )));
    }
    let limit = sigma.min(t_final - tau);
    if !(eps + delta < limit) {
        return Err(Error::WindowViolation { sum: eps + delta, limit });
    }
    Ok(EntropyProbe {
        alpha,
        chi: TestFunction::Doubling(params),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn standard(anchor_t: f64) -> DoublingParams {
        DoublingParams {
            sigma: 0.2,
            tau: 0.8,
            delta: 0.05,
            eps: 0.05,
            radius: 1.0,
            anchor_t,
            anchor_x: 0.1,
        }
    }

    #[test]
    fn mollifier_has_unit_mass() {
        let eps = 0.07;
        let m = adaptive_gauss_legendre(-eps, eps, 1e-13, 1e-16, &mut |u| mollifier(eps, u).0);
        assert!((m - 1.0).abs() < 1e-12);
        assert_eq!(mollifier(eps, 0.3).0, mollifier(eps, -0.3).0);
    }

    #[test]
    fn partials_match_finite_differences() {
        let chis = [
            TestFunction::Doubling(standard(0.5)),
            TestFunction::Doubling(DoublingParams { radius: 0.02, anchor_x: 0.9, ..standard(0.22) }),
            TestFunction::Bump { t0: 0.5, x0: 0.0, rt: 0.3, rx: 0.4 },
        ];
        let h = 1e-6;
        for chi in chis {
            let (t0, t1) = chi.time_support();
            let (x0, x1) = chi.space_support();
            for i in 1..20 {
                for j in 1..20 {
                    let t = t0 + (t1 - t0) * (i as f64 + 0.13) / 20.0;
                    let x = x0 + (x1 - x0) * (j as f64 + 0.37) / 20.0;
                    if chi.time_kinks().iter().any(|k| (k - t).abs() < 1e-4) {
                        continue;
                    }
                    let jet = chi.jet(t, x);
                    let ft = (chi.value(t + h, x) - chi.value(t - h, x)) / (2.0 * h);
                    let fx = (chi.value(t, x + h) - chi.value(t, x - h)) / (2.0 * h);
                    let scale = 1.0 + jet.dt.abs() + jet.dx.abs();
                    assert!((ft - jet.dt).abs() < 1e-5 * scale, "{chi:?} t={t} x={x}");
                    assert!((fx - jet.dx).abs() < 1e-5 * scale, "{chi:?} t={t} x={x}");
                }
            }
        }
    }

    #[test]
    fn standard_probe_time_marginal_support() {
        let (sigma, tau, delta, eps) = (0.2, 0.8, 0.05, 0.05);
        for anchor in [0.1, 0.2, 0.5, 0.85, 0.9] {
            let probe = make_doubling_probe(0.0, standard(anchor), 1.0).unwrap();
            let n = 10_000;
            for i in 0..=n {
                let t = i as f64 / n as f64;
                let inside = t >= sigma - delta - 2.0 * eps && t <= tau + delta + 2.0 * eps;
                if !inside {
                    for j in 0..50 {
                        let x = -0.3 + 0.8 * j as f64 / 49.0;
                        assert_eq!(probe.chi.value(t, x), 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn window_violation() {
        let p = DoublingParams { sigma: 0.08, ..standard(0.5) };
        assert!(matches!(make_doubling_probe(0.0, p, 1.0), Err(Error::WindowViolation { .. })));
        let p = DoublingParams { tau: 0.96, ..standard(0.5) };
        assert!(matches!(make_doubling_probe(0.0, p, 1.0), Err(Error::WindowViolation { .. })));
    }

    #[test]
    fn tent_when_plateau_collapses() {
        let p = DoublingParams { sigma: 0.5, tau: 0.5, ..standard(0.5) };
        let probe = make_doubling_probe(0.0, p, 1.0).unwrap();
        assert!(probe.chi.value(0.5, 0.1) > 0.0);
        assert_eq!(trapezoid(0.5, 0.5, 0.05, 0.5).0, 1.0);
        assert!((trapezoid(0.5, 0.5, 0.05, 0.525).0 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn cutoff_is_flat_inside() {
        assert_eq!(cutoff(1.0, 0.99), (1.0, 0.0));
        assert_eq!(cutoff(1.0, -2.0).0, 0.0);
        let (v, _) = cutoff(1.0, 1.5);
        assert!(v > 0.0 && v < 1.0);
    }

    #[test]
    fn out_of_window_bump() {
        let probe = EntropyProbe {
            alpha: 0.0,
            chi: TestFunction::Bump { t0: 0.1, x0: 0.0, rt: 0.2, rx: 0.1 },
        };
        assert!(matches!(probe.check_window(1.0), Err(Error::ProbeOutOfWindow { .. })));
    }
}
