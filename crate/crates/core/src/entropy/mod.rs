//! The nonlocal source `S[F]` and Kruzkov-type entropy tests.
//!
//! The operator `S[F](x) = F(x)(φ⋆F)(x) − ∫_{−∞}^x F(φ′⋆F) dz` with `φ = S′`
//! reproduces the double sum `(1/N²) Σ H(x − x_l) m_l m_r S(x_l − x_r)` on
//! empirical CDFs. The weight law moves mass with `S(x_r − x_l)` instead,
//! so the particle CDF satisfies
//!
//! ```text
//! ∂ₜF + ∂ₓA(F) = S̃[F],   S̃ built from the reflected kernel x ↦ S(−x).
//! ```
//!
//! Every entropy integral below uses that balance-law source
//! (see [`balance_source`]).

mod probe;
mod source;

use std::io::Write;

use rayon::prelude::*;

pub use probe::{
    cutoff, make_doubling_probe, mollifier, trapezoid, DoublingParams, EntropyProbe, Jet,
    TestFunction, CUTOFF_SHOULDER,
};
pub use source::{discrete_source, source_eval, source_profile, SOURCE_REL_TOL};

use crate::dynamics::{ParticleState, SimOptions};
use crate::error::{Error, Result};
use crate::flux::{exact_flux_derivative, theta_ladder, Flux, PiecewiseLinearFlux};
use crate::io::fmt_f64;
use crate::measures::{Kernel, StepFunction};
use crate::quadrature::gauss_legendre8_nodes;

/// Source term of the balance law solved by particle CDFs: `S[F]` with the
/// reflected kernel.
pub fn balance_source(f: &StepFunction, k: &Kernel) -> StepFunction {
    source_profile(f, &k.reflected())
}

/// Everything the entropy integrand needs at one instant.
#[derive(Debug, Clone)]
pub struct Slice {
    pub f: StepFunction,
    pub flux: Flux,
    /// Balance-law source, piecewise constant.
    pub source: StepFunction,
}

/// A piecewise-constant-in-space field on `[0, T]` that can be sampled at
/// any time.
pub trait EntropyField: Sync {
    fn t_final(&self) -> f64;

    fn slice(&self, t: f64) -> Result<Slice>;

    /// Times where the field is not smooth in `t` (collisions).
    fn time_breaks(&self) -> Vec<f64> {
        Vec::new()
    }

    /// Fixed-length list of the values the field can take; when one of
    /// them crosses `α` the entropy integrand jumps in time, so crossings
    /// are located and used as quadrature breaks. Empty disables this.
    fn levels(&self, _t: f64) -> Result<Vec<f64>> {
        Ok(Vec::new())
    }
}

/// Particle CDF `F_N` with the ladder flux `A_N`, sampled between stored
/// snapshots by re-integrating the particle system.
#[derive(Debug, Clone)]
pub struct ParticleField {
    snapshots: Vec<ParticleState>,
    kernel: Kernel,
    opts: SimOptions,
    t_final: f64,
}

impl ParticleField {
    /// `snapshots` must be sorted in time and start at or before every time
    /// that will be sampled.
    pub fn new(snapshots: Vec<ParticleState>, kernel: Kernel, opts: SimOptions, t_final: f64) -> Result<Self> {
        if snapshots.is_empty() {
            return Err(Error::InvalidInitialData("empty trajectory".into()));
        }
        if snapshots.windows(2).any(|w| w[0].t() > w[1].t()) {
            return Err(Error::InvalidInitialData("snapshots out of time order".into()));
        }
        Ok(ParticleField {
            snapshots,
            kernel,
            opts,
            t_final,
        })
    }

    /// Simulates from `initial` storing a snapshot every `opts.dt`.
    pub fn simulate(initial: &ParticleState, kernel: Kernel, t_final: f64, opts: SimOptions) -> Result<Self> {
        let count = (t_final / opts.dt).ceil().max(1.0) as usize;
        let times = crate::dynamics::uniform_times(t_final, count);
        let snaps = crate::dynamics::simulate(initial, &kernel, t_final, &times, &opts)?;
        ParticleField::new(snaps, kernel, opts, t_final)
    }

    /// Adds a snapshot every `opts.dt` between the stored ones, integrating
    /// forward from each stored state. Sampling cost then stays at one step.
    pub fn densified(self) -> Result<Self> {
        let dt = self.opts.dt;
        let mut dense = Vec::with_capacity(self.snapshots.len());
        for (k, snap) in self.snapshots.iter().enumerate() {
            let end = self.snapshots.get(k + 1).map_or(self.t_final, |s| s.t());
            let mut s = snap.clone();
            dense.push(s.clone());
            let mut next = s.t() + dt;
            while next < end - 0.5 * dt {
                s.advance_to(&self.kernel, next, &self.opts)?;
                dense.push(s.clone());
                next += dt;
            }
        }
        Ok(ParticleField {
            snapshots: dense,
            ..self
        })
    }

    pub fn snapshots(&self) -> &[ParticleState] {
        &self.snapshots
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn state_at(&self, t: f64) -> Result<ParticleState> {
        let idx = self.snapshots.partition_point(|s| s.t() <= t).saturating_sub(1);
        let mut s = self.snapshots[idx].clone();
        if t > s.t() {
            s.advance_to(&self.kernel, t, &self.opts)?;
        }
        Ok(s)
    }
}

impl EntropyField for ParticleField {
    fn t_final(&self) -> f64 {
        self.t_final
    }

    fn slice(&self, t: f64) -> Result<Slice> {
        let s = self.state_at(t)?;
        let f = s.empirical_cdf();
        let source = balance_source(&f, &self.kernel);
        Ok(Slice {
            f,
            flux: Flux::Ladder(PiecewiseLinearFlux::new(theta_ladder(&s))),
            source,
        })
    }

    fn time_breaks(&self) -> Vec<f64> {
        self.snapshots
            .last()
            .map(|s| s.events().iter().map(|e| e.time).collect())
            .unwrap_or_default()
    }

    fn levels(&self, t: f64) -> Result<Vec<f64>> {
        if self.kernel.is_zero() {
            // ladder values are frozen, nothing can cross α
            return Ok(Vec::new());
        }
        Ok(theta_ladder(&self.state_at(t)?).theta)
    }
}

/// A field that does not change in time, with the exact flux.
#[derive(Debug, Clone)]
pub struct StationaryField {
    pub f: StepFunction,
    pub kernel: Kernel,
    pub t_final: f64,
}

impl EntropyField for StationaryField {
    fn t_final(&self) -> f64 {
        self.t_final
    }

    fn slice(&self, _t: f64) -> Result<Slice> {
        Ok(Slice {
            f: self.f.clone(),
            flux: Flux::Exact,
            source: balance_source(&self.f, &self.kernel),
        })
    }
}

/// Regularised Kruzkov pair `η(z) = 𝔰_ε(z − α)`, `ψ′ = η′ A′`, where
/// `𝔰_ε(z) = z²/(2ε)` for `|z| ≤ ε` and `|z| − ε/2` otherwise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntropyPair {
    pub eps: f64,
    pub alpha: f64,
}

impl EntropyPair {
    pub fn new(eps: f64, alpha: f64) -> Result<Self> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::Parse(format!("regularisation width must be positive, got {eps}")));
        }
        Ok(EntropyPair { eps, alpha })
    }

    pub fn eta(&self, u: f64) -> f64 {
        let z = u - self.alpha;
        if z.abs() <= self.eps {
            z * z / (2.0 * self.eps)
        } else {
            z.abs() - 0.5 * self.eps
        }
    }

    pub fn deta(&self, u: f64) -> f64 {
        ((u - self.alpha) / self.eps).clamp(-1.0, 1.0)
    }

    /// `ψ(u) = ∫_α^u η′(y) A′(y) dy`, exact: the integrand is a polynomial of
    /// degree at most two between the cut points.
    pub fn psi(&self, u: f64, flux: &Flux) -> f64 {
        let (lo, hi, sign) = if u >= self.alpha { (self.alpha, u, 1.0) } else { (u, self.alpha, -1.0) };
        if hi == lo {
            return 0.0;
        }
        let mut cuts = vec![lo, hi];
        for c in [self.alpha - self.eps, self.alpha + self.eps] {
            if c > lo && c < hi {
                cuts.push(c);
            }
        }
        cuts.extend(flux.kinks().iter().copied().filter(|&c| c > lo && c < hi));
        cuts.sort_by(f64::total_cmp);
        let dflux = |y: f64| match flux {
            Flux::Exact => exact_flux_derivative(y),
            Flux::Ladder(f) => f.derivative(y),
        };
        let mut acc = 0.0;
        for w in cuts.windows(2) {
            if w[1] <= w[0] {
                continue;
            }
            // the ladder slope is constant between cuts
            let mid = 0.5 * (w[0] + w[1]);
            let slope_here = matches!(flux, Flux::Ladder(_)).then(|| dflux(mid));
            for (y, wt) in gauss_legendre8_nodes(w[0], w[1]) {
                let a = slope_here.unwrap_or_else(|| dflux(y));
                acc += wt * self.deta(y) * a;
            }
        }
        sign * acc
    }
}

/// Which entropy inequality to integrate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Entropy {
    /// `|F − α|` with flux `sgn(F − α)(A(F) − A(α))`.
    Kruzkov,
    Regularized(EntropyPair),
}

impl Entropy {
    /// Coefficients `(c_t, c_x, c_s)` of `χ_t`, `χ_x`, `χ·S` for state `u`.
    fn coefficients(&self, alpha: f64, u: f64, flux: &Flux) -> (f64, f64, f64) {
        match self {
            Entropy::Kruzkov => {
                let d = u - alpha;
                let sgn = if d > 0.0 { 1.0 } else if d < 0.0 { -1.0 } else { 0.0 };
                (d.abs(), sgn * (flux.eval_unchecked(u) - flux.eval_unchecked(alpha)), sgn)
            }
            Entropy::Regularized(p) => (p.eta(u), p.psi(u, flux), p.deta(u)),
        }
    }
}

/// Quadrature controls for the space-time integrals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadSpec {
    /// Gauss–Legendre panels per smooth time segment at the coarsest level.
    pub t_panels: usize,
    /// Panels across the spatial support at the coarsest level.
    pub x_panels: usize,
    /// Stop once successive levels differ by less than this.
    pub tol: f64,
    pub max_levels: usize,
}

impl Default for QuadSpec {
    fn default() -> Self {
        QuadSpec {
            t_panels: 2,
            x_panels: 4,
            tol: 1e-7,
            max_levels: 6,
        }
    }
}

/// Result of one space-time integral.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntropyIntegral {
    pub value: f64,
    /// `∫∫ |χ_t| + |χ_x| + |χ|`, the natural size of the integrand.
    pub scale: f64,
    /// Change between the last two refinement levels.
    pub change: f64,
}

/// Spatial integral at one time for the given level of refinement.
fn space_integral(
    slice: &Slice,
    probe: &EntropyProbe,
    entropy: &Entropy,
    t: f64,
    x_panels: usize,
) -> (f64, f64) {
    let (xlo, xhi) = probe.chi.space_support();
    if xhi <= xlo {
        return (0.0, 0.0);
    }
    let h = (xhi - xlo) / x_panels as f64;
    let mut cuts: Vec<f64> = (0..=x_panels).map(|i| xlo + i as f64 * h).collect();
    cuts.extend(slice.f.breakpoints().iter().copied().filter(|&a| a > xlo && a < xhi));
    cuts.extend(slice.source.breakpoints().iter().copied().filter(|&a| a > xlo && a < xhi));
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let (mut value, mut scale) = (0.0, 0.0);
    let mut cache: Option<(f64, f64, (f64, f64, f64))> = None;
    for w in cuts.windows(2) {
        let mid = 0.5 * (w[0] + w[1]);
        let u = slice.f.eval(mid);
        let sv = slice.source.eval(mid);
        let coef = match cache {
            Some((cu, cs, c)) if cu == u && cs == sv => c,
            _ => {
                let c = entropy.coefficients(probe.alpha, u, &slice.flux);
                cache = Some((u, sv, c));
                c
            }
        };
        for (x, wt) in gauss_legendre8_nodes(w[0], w[1]) {
            let jet = probe.chi.jet(t, x);
            value += wt * (coef.0 * jet.dt + coef.1 * jet.dx + coef.2 * sv * jet.value);
            scale += wt * (jet.dt.abs() + jet.dx.abs() + jet.value.abs());
        }
    }
    (value, scale)
}

fn sign_pattern(levels: &[f64], alpha: f64) -> Vec<i8> {
    levels
        .iter()
        .map(|&v| if v > alpha { 1 } else if v < alpha { -1 } else { 0 })
        .collect()
}

/// Splits `[a, b]` at the times where any level crosses `α`.
fn crossing_breaks<F: EntropyField + ?Sized>(
    field: &F,
    alpha: f64,
    a: f64,
    b: f64,
    pa: &[i8],
    pb: &[i8],
    depth: usize,
    out: &mut Vec<f64>,
) -> Result<()> {
    if pa == pb || depth == 0 || b - a < 1e-13 {
        return Ok(());
    }
    // bisect towards the first index whose sign differs
    let idx = pa.iter().zip(pb).position(|(x, y)| x != y).unwrap();
    let (mut lo, mut hi) = (a, b);
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        let pm = sign_pattern(&field.levels(mid)?, alpha);
        if pm[idx] == pa[idx] {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let c = 0.5 * (lo + hi);
    out.push(c);
    let pl = sign_pattern(&field.levels(lo)?, alpha);
    let ph = sign_pattern(&field.levels(hi)?, alpha);
    crossing_breaks(field, alpha, a, lo, pa, &pl, depth - 1, out)?;
    crossing_breaks(field, alpha, hi, b, &ph, pb, depth - 1, out)
}

/// `∫∫ c_t(F) χ_t + c_x(F) χ_x + c_s(F) χ S̃[F] dx dt` over the probe support.
pub fn entropy_integral<F: EntropyField + ?Sized>(
    field: &F,
    probe: &EntropyProbe,
    entropy: &Entropy,
    quad: &QuadSpec,
) -> Result<EntropyIntegral> {
    let t_final = field.t_final();
    probe.check_window(t_final)?;
    let (tlo, thi) = probe.chi.time_support();
    let (tlo, thi) = (tlo.max(0.0), thi.min(t_final));
    if thi <= tlo {
        return Ok(EntropyIntegral { value: 0.0, scale: 0.0, change: 0.0 });
    }
    let mut breaks = vec![tlo, thi];
    breaks.extend(probe.chi.time_kinks());
    breaks.extend(field.time_breaks().into_iter().filter(|&t| t > tlo && t < thi));
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    if !field.levels(tlo)?.is_empty() {
        let mut extra = Vec::new();
        for w in breaks.windows(2) {
            let pa = sign_pattern(&field.levels(w[0])?, probe.alpha);
            let pb = sign_pattern(&field.levels(w[1])?, probe.alpha);
            crossing_breaks(field, probe.alpha, w[0], w[1], &pa, &pb, 24, &mut extra)?;
        }
        breaks.extend(extra);
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();
    }
    let mut prev: Option<(f64, f64)> = None;
    let mut change = f64::INFINITY;
    for level in 0..=quad.max_levels {
        let tp = quad.t_panels << level;
        let xp = quad.x_panels << level;
        let (mut value, mut scale) = (0.0, 0.0);
        for w in breaks.windows(2) {
            let h = (w[1] - w[0]) / tp as f64;
            if h <= 0.0 {
                continue;
            }
            for p in 0..tp {
                let a = w[0] + p as f64 * h;
                for (t, wt) in gauss_legendre8_nodes(a, a + h) {
                    let slice = field.slice(t)?;
                    let (v, s) = space_integral(&slice, probe, entropy, t, xp);
                    value += wt * v;
                    scale += wt * s;
                }
            }
        }
        if let Some((pv, _)) = prev {
            change = (value - pv).abs();
            if change < quad.tol {
                return Ok(EntropyIntegral { value, scale, change });
            }
        }
        prev = Some((value, scale));
    }
    let (value, scale) = prev.unwrap();
    Ok(EntropyIntegral { value, scale, change })
}

/// Kruzkov entropy integral for the probe's constant `α`.
pub fn kruzkov_integral<F: EntropyField + ?Sized>(
    field: &F,
    probe: &EntropyProbe,
    quad: &QuadSpec,
) -> Result<EntropyIntegral> {
    entropy_integral(field, probe, &Entropy::Kruzkov, quad)
}

/// Regularised-pair counterpart of [`kruzkov_integral`].
pub fn entropy_pair_inequality<F: EntropyField + ?Sized>(
    field: &F,
    pair: &EntropyPair,
    probe: &EntropyProbe,
    quad: &QuadSpec,
) -> Result<EntropyIntegral> {
    let probe = EntropyProbe {
        alpha: pair.alpha,
        ..*probe
    };
    entropy_integral(field, &probe, &Entropy::Regularized(*pair), quad)
}

/// Default relative tolerance: a probe passes when its integral is at least
/// `−ENTROPY_REL_TOL × scale`.
pub const ENTROPY_REL_TOL: f64 = 1e-6;

/// One row of the entropy report.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeResult {
    pub probe_id: usize,
    pub alpha: f64,
    pub sigma: f64,
    pub tau: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub integral_value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Runs every probe (in parallel) and reports pass/fail with tolerance
/// `rel_tol × scale`. Results keep the order of `probes`.
pub fn run_battery<F: EntropyField + ?Sized>(
    field: &F,
    probes: &[EntropyProbe],
    quad: &QuadSpec,
    rel_tol: f64,
) -> Result<Vec<ProbeResult>> {
    probes
        .par_iter()
        .enumerate()
        .map(|(id, probe)| {
            let r = kruzkov_integral(field, probe, quad)?;
            let tolerance = rel_tol * r.scale;
            let (sigma, tau, epsilon, delta) = probe.window_columns();
            Ok(ProbeResult {
                probe_id: id,
                alpha: probe.alpha,
                sigma,
                tau,
                epsilon,
                delta,
                integral_value: r.value,
                tolerance,
                pass: r.value >= -tolerance,
            })
        })
        .collect()
}

pub const ENTROPY_CSV_HEADER: [&str; 9] = [
    "probe_id",
    "alpha",
    "sigma",
    "tau",
    "epsilon",
    "delta",
    "integral_value",
    "tolerance",
    "pass",
];

pub fn write_entropy_csv<W: Write>(rows: &[ProbeResult], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(ENTROPY_CSV_HEADER)?;
    for r in rows {
        wtr.write_record([
            r.probe_id.to_string(),
            fmt_f64(r.alpha),
            fmt_f64(r.sigma),
            fmt_f64(r.tau),
            fmt_f64(r.epsilon),
            fmt_f64(r.delta),
            fmt_f64(r.integral_value),
            fmt_f64(r.tolerance),
            r.pass.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Doubling probes anchored at each point of `anchors`, for every `α` and
/// every `(σ, τ, δ, ε)` window. Anchors with an empty support are skipped.
pub fn probe_grid(
    alphas: &[f64],
    windows: &[(f64, f64, f64, f64)],
    anchors: &[(f64, f64)],
    radius: f64,
    t_final: f64,
) -> Result<Vec<EntropyProbe>> {
    let mut out = Vec::new();
    for &(sigma, tau, delta, eps) in windows {
        for &(s, y) in anchors {
            for &alpha in alphas {
                let params = DoublingParams {
                    sigma,
                    tau,
                    delta,
                    eps,
                    radius,
                    anchor_t: s,
                    anchor_x: y,
                };
                let probe = make_doubling_probe(alpha, params, t_final)?;
                let (lo, hi) = probe.chi.time_support();
                if hi > lo {
                    out.push(probe);
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bump_probe(alpha: f64, t0: f64, x0: f64) -> EntropyProbe {
        EntropyProbe {
            alpha,
            chi: TestFunction::Bump { t0, x0, rt: 0.3, rx: 0.4 },
        }
    }

    #[test]
    fn constant_field_integrates_to_zero() {
        let field = StationaryField {
            f: StepFunction::constant(0.2),
            kernel: Kernel::zero(),
            t_final: 1.0,
        };
        for alpha in [-0.5, 0.0, 0.2, 0.4] {
            let r = kruzkov_integral(&field, &bump_probe(alpha, 0.5, 0.1), &QuadSpec::default()).unwrap();
            assert!(r.value.abs() < 1e-12, "alpha={alpha}: {}", r.value);
            assert!(r.scale > 0.0);
        }
    }

    #[test]
    fn stationary_shock_with_alpha_outside_range() {
        let field = StationaryField {
            f: StepFunction::heaviside(0.0, -0.5, 0.5),
            kernel: Kernel::zero(),
            t_final: 1.0,
        };
        for alpha in [-0.7, 0.9] {
            let r = kruzkov_integral(&field, &bump_probe(alpha, 0.5, 0.05), &QuadSpec::default()).unwrap();
            assert!(r.value.abs() < 1e-12);
        }
    }

    #[test]
    fn entropy_pair_basics() {
        let p = EntropyPair::new(0.1, 0.2).unwrap();
        assert_eq!(p.eta(0.2), 0.0);
        assert!((p.eta(0.25) - 0.0125).abs() < 1e-15);
        assert!((p.eta(0.5) - 0.25).abs() < 1e-15);
        assert_eq!(p.deta(1.0), 1.0);
        // ψ for the exact flux: ∫_α^u η′(y)(−2y) dy
        let u = 0.45;
        let exact = {
            // quadratic core on [0.2, 0.3], linear part on [0.3, 0.45]
            let core = -2.0 / 0.1 * ((0.3f64.powi(3) - 0.2f64.powi(3)) / 3.0 - 0.2 * (0.3f64.powi(2) - 0.2f64.powi(2)) / 2.0);
            let tail = -(0.45f64.powi(2) - 0.3f64.powi(2));
            core + tail
        };
        assert!((p.psi(u, &Flux::Exact) - exact).abs() < 1e-14);
        assert!(EntropyPair::new(0.0, 0.0).is_err());
    }

    #[test]
    fn two_particle_shock_is_admissible() {
        let s = ParticleState::new(vec![0.0, 1.0], vec![1.5, 0.5]).unwrap();
        let opts = SimOptions::for_horizon(1.0).with_dt(0.01);
        let field = ParticleField::simulate(&s, Kernel::zero(), 1.0, opts).unwrap();
        // left shock starts at 0 moving with speed 1/4
        let probe = bump_probe(0.1, 0.5, 0.125);
        let r = kruzkov_integral(&field, &probe, &QuadSpec::default()).unwrap();
        assert!(r.value >= -1e-6 * r.scale, "{r:?}");
        // an independent finer run agrees
        let fine = QuadSpec { t_panels: 8, x_panels: 16, ..QuadSpec::default() };
        let r2 = kruzkov_integral(&field, &probe, &fine).unwrap();
        assert!((r.value - r2.value).abs() < 1e-6);
    }

    #[test]
    fn densified_field_matches_dense_simulation() {
        let s = ParticleState::new(vec![0.0, 0.4, 1.0], vec![1.5, 0.5, 1.0]).unwrap();
        let k = Kernel::odd_bump(1.0, 0.8).unwrap();
        let opts = SimOptions::for_horizon(1.0).with_dt(0.01);
        let sparse = crate::dynamics::simulate(&s, &k, 1.0, &[0.0, 0.5], &opts).unwrap();
        let field = ParticleField::new(sparse, k, opts, 1.0).unwrap().densified().unwrap();
        assert!(field.snapshots().len() >= 100);
        let dense = ParticleField::simulate(&s, k, 1.0, opts).unwrap();
        for t in [0.123, 0.5, 0.77] {
            let a = field.state_at(t).unwrap().empirical_cdf();
            let b = dense.state_at(t).unwrap().empirical_cdf();
            assert!(a.l1_distance(&b).unwrap() < 1e-12);
        }
    }

    #[test]
    fn regularized_pair_approaches_kruzkov() {
        let s = ParticleState::new(vec![0.0, 1.0], vec![1.5, 0.5]).unwrap();
        let opts = SimOptions::for_horizon(1.0).with_dt(0.01);
        let field = ParticleField::simulate(&s, Kernel::zero(), 1.0, opts).unwrap();
        let probe = bump_probe(0.1, 0.5, 0.125);
        let quad = QuadSpec::default();
        let k = kruzkov_integral(&field, &probe, &quad).unwrap().value;
        let mut prev = f64::INFINITY;
        for eps in [1e-1, 1e-2, 1e-3] {
            let pair = EntropyPair::new(eps, 0.1).unwrap();
            let v = entropy_pair_inequality(&field, &pair, &probe, &quad).unwrap().value;
            let gap = (v - k).abs();
            assert!(gap <= prev + 1e-12);
            prev = gap;
        }
        assert!(prev < 1e-4);
    }

    #[test]
    fn battery_report_csv() {
        let field = StationaryField {
            f: StepFunction::constant(0.0),
            kernel: Kernel::zero(),
            t_final: 1.0,
        };
        let probes = vec![bump_probe(0.1, 0.5, 0.0), bump_probe(-0.1, 0.5, 0.0)];
        let rows = run_battery(&field, &probes, &QuadSpec::default(), ENTROPY_REL_TOL).unwrap();
        assert!(rows.iter().all(|r| r.pass));
        let mut buf = Vec::new();
        write_entropy_csv(&rows, &mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("probe_id,alpha,sigma"));
    }
}
