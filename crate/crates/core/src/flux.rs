//! The Burgers-type flux `A(F) = −F²`, its piecewise-linear interpolant on
//! the weight ladder, and shock admissibility checks for particle states.

use std::io::Write;

use crate::dynamics::ParticleState;
use crate::error::{Error, Result};
use crate::io::fmt_f64;

/// Slack allowed when checking that a flux argument lies in `[-1/2, 1/2]`.
pub const RANGE_TOL: f64 = 1e-12;
/// Jumps smaller than this do not define a shock.
pub const MIN_JUMP: f64 = 1e-14;
/// Uniform interior probes added to the ladder nodes in Oleinik checks.
pub const OLEINIK_UNIFORM_PROBES: usize = 16;

/// `A(u) = −u²`.
#[inline]
pub fn exact_flux(u: f64) -> f64 {
    -u * u
}

/// `A′(u) = −2u`.
#[inline]
pub fn exact_flux_derivative(u: f64) -> f64 {
    -2.0 * u
}

fn check_range(u: f64) -> Result<()> {
    if u.is_nan() || u.abs() > 0.5 + RANGE_TOL {
        return Err(Error::OutOfRange(u));
    }
    Ok(())
}

/// Cumulative weights `θᵢ = −1/2 + (1/N) Σ_{j≤i} mⱼ`, `i = 0..=N`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaLadder {
    pub t: f64,
    pub theta: Vec<f64>,
}

impl ThetaLadder {
    /// Builds the ladder from raw weights. The last node is set to exactly
    /// `1/2`, absorbing summation roundoff.
    pub fn from_weights(t: f64, m: &[f64]) -> Self {
        let n = m.len() as f64;
        let mut theta = Vec::with_capacity(m.len() + 1);
        theta.push(-0.5);
        let mut acc = 0.0;
        for &w in m {
            acc += w;
            theta.push(-0.5 + acc / n);
        }
        *theta.last_mut().unwrap() = 0.5;
        ThetaLadder { t, theta }
    }

    pub fn n(&self) -> usize {
        self.theta.len() - 1
    }

    /// Largest spacing `max mᵢ/N`.
    pub fn max_gap(&self) -> f64 {
        self.theta.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }

    pub fn min_gap(&self) -> f64 {
        self.theta.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
    }
}

pub fn theta_ladder(state: &ParticleState) -> ThetaLadder {
    ThetaLadder::from_weights(state.t(), state.m())
}

/// Continuous piecewise-linear interpolant of `A` at the ladder nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinearFlux {
    ladder: ThetaLadder,
    node_values: Vec<f64>,
}

impl PiecewiseLinearFlux {
    pub fn new(ladder: ThetaLadder) -> Self {
        let node_values = ladder.theta.iter().map(|&u| exact_flux(u)).collect();
        PiecewiseLinearFlux { ladder, node_values }
    }

    pub fn ladder(&self) -> &ThetaLadder {
        &self.ladder
    }

    pub fn node_values(&self) -> &[f64] {
        &self.node_values
    }

    /// Index `i ≥ 1` of the segment `[θ_{i−1}, θ_i]` holding `u`.
    fn segment(&self, u: f64) -> usize {
        let th = &self.ladder.theta;
        th.partition_point(|&v| v < u).clamp(1, th.len() - 1)
    }

    /// Evaluation without the range check; arguments outside the ladder are
    /// extrapolated from the outer segments.
    pub fn eval_unchecked(&self, u: f64) -> f64 {
        let i = self.segment(u);
        let th = &self.ladder.theta;
        let slope = (self.node_values[i] - self.node_values[i - 1]) / (th[i] - th[i - 1]);
        slope * (u - th[i]) + self.node_values[i]
    }

    /// Slope of the segment holding `u`; the left segment at nodes.
    pub fn derivative(&self, u: f64) -> f64 {
        let i = self.segment(u);
        let th = &self.ladder.theta;
        (self.node_values[i] - self.node_values[i - 1]) / (th[i] - th[i - 1])
    }

    pub fn eval(&self, u: f64) -> Result<f64> {
        check_range(u)?;
        Ok(self.eval_unchecked(u))
    }
}

/// Either the exact flux or a discretised one.
#[derive(Debug, Clone, PartialEq)]
pub enum Flux {
    Exact,
    Ladder(PiecewiseLinearFlux),
}

impl Flux {
    pub fn eval(&self, u: f64) -> Result<f64> {
        check_range(u)?;
        Ok(self.eval_unchecked(u))
    }

    pub fn eval_unchecked(&self, u: f64) -> f64 {
        match self {
            Flux::Exact => exact_flux(u),
            Flux::Ladder(f) => f.eval_unchecked(u),
        }
    }

    /// Nodes at which the flux derivative jumps.
    pub fn kinks(&self) -> &[f64] {
        match self {
            Flux::Exact => &[],
            Flux::Ladder(f) => &f.ladder.theta,
        }
    }
}

/// `sup_u |A_N(u) − A(u)|` sampled at `probes` uniform points of
/// `[-1/2, 1/2]` plus the segment midpoints, where the error peaks.
pub fn flux_sup_error(f: &PiecewiseLinearFlux, probes: usize) -> f64 {
    let uniform = (0..probes).map(|i| -0.5 + i as f64 / (probes - 1).max(1) as f64);
    let mids = f.ladder.theta.windows(2).map(|w| 0.5 * (w[0] + w[1]));
    uniform
        .chain(mids)
        .map(|u| (f.eval_unchecked(u) - exact_flux(u)).abs())
        .fold(0.0, f64::max)
}

/// `2M̄·Lip(A)/N` with `Lip(A) = 1` on `[-1/2, 1/2]`.
pub fn flux_error_bound(m_bar: f64, n: usize) -> f64 {
    2.0 * m_bar / n as f64
}

/// Lipschitz seminorm of `A_a − A_b`: the largest slope difference over the
/// merged node set, on which the difference is piecewise linear.
pub fn lip_seminorm_difference(a: &PiecewiseLinearFlux, b: &PiecewiseLinearFlux) -> f64 {
    let mut nodes: Vec<f64> = a.ladder.theta.iter().chain(&b.ladder.theta).copied().collect();
    nodes.sort_by(f64::total_cmp);
    nodes.dedup();
    nodes
        .windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| {
            let mid = 0.5 * (w[0] + w[1]);
            (a.derivative(mid) - b.derivative(mid)).abs()
        })
        .fold(0.0, f64::max)
}

/// Lipschitz seminorm of `A_N − A` on `[-1/2, 1/2]`. On each segment the
/// slope difference `2u − (θ_{i−1} + θ_i)` is largest at the ends, where it
/// equals the segment length, so this is the largest ladder spacing.
pub fn lip_seminorm_to_exact(f: &PiecewiseLinearFlux) -> f64 {
    f.ladder.max_gap()
}

/// Left and right states `(θ_lo, θ_hi)` of the jump carried by cluster `c`,
/// together with the node index range `lo..=hi`.
fn shock_states(state: &ParticleState, ladder: &ThetaLadder, c: usize) -> Result<(usize, usize)> {
    if c >= state.n_clusters() {
        return Err(Error::NoSuchShock {
            index: c,
            clusters: state.n_clusters(),
        });
    }
    let r = state.cluster(c);
    let (lo, hi) = (r.start, r.end);
    let jump = ladder.theta[hi] - ladder.theta[lo];
    if !(jump >= MIN_JUMP) {
        return Err(Error::DegenerateJump(jump));
    }
    Ok((lo, hi))
}

fn chord(flux: &PiecewiseLinearFlux, lo: usize, hi: usize) -> f64 {
    let th = &flux.ladder.theta;
    (flux.node_values[hi] - flux.node_values[lo]) / (th[hi] - th[lo])
}

/// `|chord slope of A_N across the jump − cluster velocity|`.
pub fn rh_residual(state: &ParticleState, c: usize) -> Result<f64> {
    let flux = PiecewiseLinearFlux::new(theta_ladder(state));
    let (lo, hi) = shock_states(state, flux.ladder(), c)?;
    let v = state.cluster_velocities()[c];
    Ok((chord(&flux, lo, hi) - v).abs())
}

/// Chord slope of `A_N` from the left state to `theta_probe`, minus the
/// cluster velocity. The probe must lie in `(θ_lo, θ_hi]`.
pub fn oleinik_margin(state: &ParticleState, c: usize, theta_probe: f64) -> Result<f64> {
    let flux = PiecewiseLinearFlux::new(theta_ladder(state));
    let (lo, hi) = shock_states(state, flux.ladder(), c)?;
    let v = state.cluster_velocities()[c];
    margin_at(&flux, lo, hi, v, theta_probe)
}

fn margin_at(flux: &PiecewiseLinearFlux, lo: usize, hi: usize, v: f64, theta: f64) -> Result<f64> {
    let th = &flux.ladder.theta;
    if !(theta > th[lo] && theta <= th[hi]) {
        return Err(Error::OutOfRange(theta));
    }
    let slope = (flux.eval_unchecked(theta) - flux.node_values[lo]) / (theta - th[lo]);
    Ok(slope - v)
}

/// Minimum Oleinik margin over the ladder nodes strictly inside the jump,
/// its right state, and [`OLEINIK_UNIFORM_PROBES`] uniform interior points.
pub fn min_oleinik_margin(state: &ParticleState, c: usize) -> Result<f64> {
    let flux = PiecewiseLinearFlux::new(theta_ladder(state));
    let (lo, hi) = shock_states(state, flux.ladder(), c)?;
    let v = state.cluster_velocities()[c];
    let th = flux.ladder.theta.clone();
    let mut worst = f64::INFINITY;
    for &node in &th[lo + 1..=hi] {
        worst = worst.min(margin_at(&flux, lo, hi, v, node)?);
    }
    let k = OLEINIK_UNIFORM_PROBES;
    for j in 1..=k {
        let theta = th[lo] + (th[hi] - th[lo]) * j as f64 / (k + 1) as f64;
        worst = worst.min(margin_at(&flux, lo, hi, v, theta)?);
    }
    Ok(worst)
}

/// One row of the shock report.
#[derive(Debug, Clone, PartialEq)]
pub struct ShockRecord {
    pub t: f64,
    pub shock_position: f64,
    pub left_state: f64,
    pub right_state: f64,
    pub chord_slope: f64,
    pub velocity: f64,
    pub rh_residual: f64,
    pub min_oleinik_margin: f64,
}

/// RH and Oleinik verdicts for every cluster of a snapshot.
pub fn shock_report(state: &ParticleState) -> Result<Vec<ShockRecord>> {
    let flux = PiecewiseLinearFlux::new(theta_ladder(state));
    let vel = state.cluster_velocities();
    let mut out = Vec::with_capacity(state.n_clusters());
    for c in 0..state.n_clusters() {
        let (lo, hi) = shock_states(state, flux.ladder(), c)?;
        let chord_slope = chord(&flux, lo, hi);
        out.push(ShockRecord {
            t: state.t(),
            shock_position: state.cluster_position(c),
            left_state: flux.ladder.theta[lo],
            right_state: flux.ladder.theta[hi],
            chord_slope,
            velocity: vel[c],
            rh_residual: (chord_slope - vel[c]).abs(),
            min_oleinik_margin: min_oleinik_margin(state, c)?,
        });
    }
    Ok(out)
}

pub const SHOCK_CSV_HEADER: [&str; 8] = [
    "t",
    "shock_position",
    "left_state",
    "right_state",
    "chord_slope",
    "velocity",
    "rh_residual",
    "min_oleinik_margin",
];

pub fn write_shock_csv<W: Write>(records: &[ShockRecord], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(SHOCK_CSV_HEADER)?;
    for r in records {
        wtr.write_record(
            [
                r.t,
                r.shock_position,
                r.left_state,
                r.right_state,
                r.chord_slope,
                r.velocity,
                r.rh_residual,
                r.min_oleinik_margin,
            ]
            .map(fmt_f64),
        )?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{simulate, SimOptions};
    use crate::measures::Kernel;

    fn ladder(m: &[f64]) -> ThetaLadder {
        ThetaLadder::from_weights(0.0, m)
    }

    #[test]
    fn ladder_examples() {
        assert_eq!(ladder(&[1.0, 1.0]).theta, vec![-0.5, 0.0, 0.5]);
        assert_eq!(ladder(&[1.5, 0.5]).theta, vec![-0.5, 0.25, 0.5]);
        assert_eq!(ladder(&[1.0]).theta, vec![-0.5, 0.5]);
    }

    #[test]
    fn flux_examples() {
        assert_eq!(Flux::Exact.eval(0.5).unwrap(), -0.25);
        assert_eq!(Flux::Exact.eval(-0.5).unwrap(), -0.25);
        let f = PiecewiseLinearFlux::new(ladder(&[1.0, 1.0]));
        assert_eq!(f.eval(0.0).unwrap(), 0.0);
        assert!((f.eval(0.25).unwrap() + 0.125).abs() < 1e-16);
        let err = (f.eval(0.25).unwrap() - exact_flux(0.25)).abs();
        assert!((err - 1.0 / 16.0).abs() < 1e-16);
        assert!(err <= flux_error_bound(1.0, 2));
        assert!(matches!(f.eval(0.6), Err(Error::OutOfRange(_))));
        assert!(Flux::Exact.eval(0.5 + 1e-13).is_ok());
    }

    #[test]
    fn interpolant_hits_nodes() {
        let f = PiecewiseLinearFlux::new(ladder(&[0.3, 1.9, 0.8, 1.0]));
        for &u in &f.ladder().theta {
            assert_eq!(f.eval(u).unwrap(), exact_flux(u));
        }
    }

    #[test]
    fn rh_examples() {
        let s = ParticleState::new(vec![-1.0, 1.0], vec![1.0, 1.0]).unwrap();
        assert_eq!(rh_residual(&s, 0).unwrap(), 0.0);
        assert_eq!(rh_residual(&s, 1).unwrap(), 0.0);
        let s = ParticleState::new(vec![0.0, 1.0], vec![1.5, 0.5]).unwrap();
        assert!(rh_residual(&s, 0).unwrap() < 1e-16);
        assert!(rh_residual(&s, 1).unwrap() < 1e-16);
        let s = ParticleState::new(vec![0.0], vec![1.0]).unwrap();
        assert_eq!(rh_residual(&s, 0).unwrap(), 0.0);
        assert!(matches!(rh_residual(&s, 1), Err(Error::NoSuchShock { .. })));
    }

    #[test]
    fn oleinik_examples() {
        let s = ParticleState::new(vec![-1.0, 1.0], vec![1.0, 1.0]).unwrap();
        assert_eq!(oleinik_margin(&s, 0, 0.0).unwrap(), 0.0);
        assert_eq!(oleinik_margin(&s, 1, 0.5).unwrap(), 0.0);
        assert!(oleinik_margin(&s, 0, -0.5).is_err());
    }

    #[test]
    fn merged_triple_interior_margins_nonnegative() {
        let s = ParticleState::with_unit_weights(vec![-1.0, 0.0, 1.0]).unwrap();
        let opts = SimOptions::for_horizon(2.0).with_dt(0.01);
        let end = simulate(&s, &Kernel::zero(), 2.0, &[], &opts).unwrap().pop().unwrap();
        assert_eq!(end.n_clusters(), 1);
        let th = theta_ladder(&end).theta;
        for &node in &th[1..] {
            // brute-force chord from the left state
            let slope = (exact_flux(node) - exact_flux(th[0])) / (node - th[0]);
            assert!(slope >= 0.0);
            assert!(oleinik_margin(&end, 0, node).unwrap() >= -1e-15);
        }
        assert!(min_oleinik_margin(&end, 0).unwrap() >= -1e-15);
    }

    #[test]
    fn lip_seminorms() {
        let a = PiecewiseLinearFlux::new(ladder(&[1.0, 1.0]));
        assert_eq!(lip_seminorm_difference(&a, &a), 0.0);
        assert_eq!(lip_seminorm_to_exact(&a), 0.5);
        let b = PiecewiseLinearFlux::new(ladder(&[1.0; 4]));
        // slopes: a = 1/2, −1/2; b = 3/4, 1/4, −1/4, −3/4
        assert!((lip_seminorm_difference(&a, &b) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn shock_csv_has_header() {
        let s = ParticleState::new(vec![-1.0, 1.0], vec![1.0, 1.0]).unwrap();
        let mut buf = Vec::new();
        write_shock_csv(&shock_report(&s).unwrap(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,shock_position,left_state"));
        assert_eq!(text.lines().count(), 3);
    }
}
