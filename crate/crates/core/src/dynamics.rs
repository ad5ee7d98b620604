//! Event-driven integration of the sticky weighted particle system
//!
//! ```text
//! ẋᵢ = (1/N) Σⱼ mⱼ sgn(xⱼ − xᵢ),      ṁᵢ = (1/N) mᵢ Σⱼ mⱼ S(xⱼ − xᵢ)
//! ```
//!
//! Between collisions every cluster moves as one rigid particle and the
//! vector field is smooth, so it is advanced with classical RK4. Collisions
//! are located by regula falsi on the smallest gap and the colliding
//! clusters merge for good.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flux::ThetaLadder;
use crate::measures::{Kernel, StepFunction};

/// Mass normalisation tolerance accepted for initial data.
pub const MASS_TOL: f64 = 1e-12;

/// One collision time together with every cluster formed at that time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollisionEvent {
    pub time: f64,
    /// Zero-based particle indices of each newly formed cluster.
    pub merged_indices: Vec<Vec<usize>>,
}

/// Positions, weights and cluster partition of the N-particle system.
///
/// Particles are indexed left to right. Clusters are contiguous index blocks
/// whose members share one bitwise-identical position.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleState {
    t: f64,
    x: Vec<f64>,
    m: Vec<f64>,
    /// `starts[c]..starts[c + 1]` are the members of cluster `c`.
    starts: Vec<usize>,
    m_in: Vec<f64>,
    x_bar: f64,
    events: Vec<CollisionEvent>,
}

/// Integrator settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    /// Nominal RK4 step.
    pub dt: f64,
    /// Clusters closer than this are merged.
    pub gap_tol: f64,
    /// Width of the final bracket around a collision time.
    pub event_tol: f64,
    /// Collisions tolerated inside one nominal step; `None` means N.
    pub max_events: Option<usize>,
}

impl SimOptions {
    /// `dt = 1e-3·T`, `gap_tol = 1e-10`, `event_tol = 1e-12`.
    pub fn for_horizon(t_final: f64) -> Self {
        SimOptions {
            dt: if t_final > 0.0 { 1e-3 * t_final } else { 1e-3 },
            gap_tol: 1e-10,
            event_tol: 1e-12,
            max_events: None,
        }
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !(ok(self.dt) && ok(self.gap_tol) && ok(self.event_tol)) {
            return Err(Error::Parse(format!(
                "dt, gap_tol and event_tol must be positive (got {}, {}, {})",
                self.dt, self.gap_tol, self.event_tol
            )));
        }
        Ok(())
    }
}

impl ParticleState {
    /// Validated initial data at `t = 0`: strictly increasing positions,
    /// positive weights with mean one.
    pub fn new(x: Vec<f64>, m: Vec<f64>) -> Result<Self> {
        let n = x.len();
        if n == 0 {
            return Err(Error::InvalidInitialData("no particles".into()));
        }
        if m.len() != n {
            return Err(Error::InvalidInitialData(format!(
                "{n} positions but {} weights",
                m.len()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInitialData("positions must be finite".into()));
        }
        if let Some(i) = x.windows(2).position(|w| w[0] >= w[1]) {
            return Err(Error::InvalidInitialData(format!(
                "positions must be strictly increasing (x[{i}] = {} >= x[{}] = {})",
                x[i],
                i + 1,
                x[i + 1]
            )));
        }
        if let Some(i) = m.iter().position(|&w| !(w.is_finite() && w > 0.0)) {
            return Err(Error::InvalidInitialData(format!(
                "weights must be positive (m[{i}] = {})",
                m[i]
            )));
        }
        let mean = m.iter().sum::<f64>() / n as f64;
        if (mean - 1.0).abs() > MASS_TOL {
            return Err(Error::InvalidInitialData(format!(
                "weights must average to 1, got {mean}"
            )));
        }
        let x_bar = x.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        Ok(ParticleState {
            t: 0.0,
            starts: (0..=n).collect(),
            m_in: m.clone(),
            x,
            m,
            x_bar,
            events: Vec::new(),
        })
    }

    /// Unit weights at the given strictly increasing positions.
    pub fn with_unit_weights(x: Vec<f64>) -> Result<Self> {
        let n = x.len();
        ParticleState::new(x, vec![1.0; n])
    }

    /// Rebuilds a snapshot read back from disk. Only structural consistency
    /// is checked: contiguous cluster ids and shared positions within clusters.
    /// Weights and ordering are left for the caller to check.
    pub fn from_snapshot(t: f64, x: Vec<f64>, m: Vec<f64>, cluster_id: &[usize]) -> Result<Self> {
        let n = x.len();
        if n == 0 || m.len() != n || cluster_id.len() != n {
            return Err(Error::InvalidInitialData("snapshot columns have inconsistent lengths".into()));
        }
        if cluster_id[0] != 0 {
            return Err(Error::InvalidInitialData("cluster ids must start at 0".into()));
        }
        let mut starts = vec![0];
        for i in 1..n {
            match cluster_id[i].checked_sub(cluster_id[i - 1]) {
                Some(0) => {
                    if x[i] != x[i - 1] {
                        return Err(Error::InvalidInitialData(format!(
                            "particles {} and {i} share a cluster but not a position",
                            i - 1
                        )));
                    }
                }
                Some(1) => starts.push(i),
                _ => {
                    return Err(Error::InvalidInitialData(
                        "cluster ids must be contiguous and increasing".into(),
                    ))
                }
            }
        }
        starts.push(n);
        let x_bar = x.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        Ok(ParticleState {
            t,
            m_in: m.clone(),
            x,
            m,
            starts,
            x_bar,
            events: Vec::new(),
        })
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn m(&self) -> &[f64] {
        &self.m
    }

    /// Initial weights `mᵢ^in`.
    pub fn m_initial(&self) -> &[f64] {
        &self.m_in
    }

    /// `X̄ = max |xᵢ^in|`.
    pub fn x_bar(&self) -> f64 {
        self.x_bar
    }

    pub fn events(&self) -> &[CollisionEvent] {
        &self.events
    }

    pub fn n_clusters(&self) -> usize {
        self.starts.len() - 1
    }

    pub fn cluster(&self, c: usize) -> Range<usize> {
        self.starts[c]..self.starts[c + 1]
    }

    pub fn clusters(&self) -> impl Iterator<Item = Range<usize>> + '_ {
        self.starts.windows(2).map(|w| w[0]..w[1])
    }

    /// Cluster index of every particle.
    pub fn cluster_ids(&self) -> Vec<usize> {
        let mut ids = vec![0; self.n()];
        for (c, r) in self.clusters().enumerate() {
            ids[r].iter_mut().for_each(|v| *v = c);
        }
        ids
    }

    pub fn cluster_position(&self, c: usize) -> f64 {
        self.x[self.starts[c]]
    }

    pub fn cluster_mass(&self, c: usize) -> f64 {
        self.m[self.cluster(c)].iter().sum()
    }

    /// `(1/N) Σ mₖ`.
    pub fn mean_mass(&self) -> f64 {
        self.m.iter().sum::<f64>() / self.n() as f64
    }

    /// Per-cluster velocities `(1/N)(mass to the right − mass to the left)`.
    pub fn cluster_velocities(&self) -> Vec<f64> {
        let masses: Vec<f64> = (0..self.n_clusters()).map(|c| self.cluster_mass(c)).collect();
        velocities_from_masses(&masses, self.n())
    }

    /// Shifted empirical CDF `−1/2 + (1/N) Σ mₖ H(x − xₖ)` with `H(0) = 1`.
    /// Members of a cluster share one breakpoint.
    pub fn empirical_cdf(&self) -> StepFunction {
        let ladder = ThetaLadder::from_weights(self.t, &self.m);
        let jumps: Vec<(f64, f64)> = self
            .clusters()
            .map(|r| (self.x[r.start], ladder.theta[r.end]))
            .collect();
        StepFunction::from_sorted_jumps(-0.5, &jumps).unwrap_or_else(|_| {
            // unordered positions (corrupted input): fall back to sorting
            let mut sorted = jumps.clone();
            sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
            StepFunction::from_sorted_jumps(-0.5, &sorted).expect("sorted finite jumps")
        })
    }

    /// Collision-time partition `0 = T₀ < T₁ < … < T_k = T` for horizon `T`.
    pub fn collision_partition(&self, t_final: f64) -> Vec<f64> {
        let mut ts = vec![0.0];
        for e in &self.events {
            if e.time > *ts.last().unwrap() && e.time < t_final {
                ts.push(e.time);
            }
        }
        if t_final > 0.0 {
            ts.push(t_final);
        }
        ts
    }
}

fn velocities_from_masses(masses: &[f64], n: usize) -> Vec<f64> {
    let total: f64 = masses.iter().sum();
    let mut left = 0.0;
    masses
        .iter()
        .map(|&mc| {
            let v = (total - left - mc - left) / n as f64;
            left += mc;
            v
        })
        .collect()
}

/// Per-particle velocities with `sgn(0) = 0`.
pub fn velocity(state: &ParticleState) -> Vec<f64> {
    let vc = state.cluster_velocities();
    let mut v = vec![0.0; state.n()];
    for (c, r) in state.clusters().enumerate() {
        v[r].iter_mut().for_each(|e| *e = vc[c]);
    }
    v
}

/// `gᶜ = (1/N) Σ_{c'} M_{c'} S(y_{c'} − y_c)`, visiting only pairs closer than
/// the kernel radius. Each pair is evaluated once so that `Σ M_c gᶜ` cancels
/// to roundoff.
fn cluster_growth(y: &[f64], masses: &[f64], k: &Kernel, n: usize, out: &mut Vec<f64>) {
    out.clear();
    out.resize(y.len(), 0.0);
    if k.is_zero() {
        return;
    }
    let r = k.radius();
    for c in 0..y.len() {
        for c2 in c + 1..y.len() {
            let d = y[c2] - y[c];
            if d >= r {
                break;
            }
            let s = k.s(d);
            out[c] += masses[c2] * s;
            out[c2] -= masses[c] * s;
        }
    }
    let inv_n = 1.0 / n as f64;
    out.iter_mut().for_each(|g| *g *= inv_n);
}

/// `ṁᵢ = (1/N) mᵢ Σⱼ mⱼ S(xⱼ − xᵢ)`.
pub fn weight_rhs(state: &ParticleState, k: &Kernel) -> Vec<f64> {
    let y: Vec<f64> = (0..state.n_clusters()).map(|c| state.cluster_position(c)).collect();
    let masses: Vec<f64> = (0..state.n_clusters()).map(|c| state.cluster_mass(c)).collect();
    let mut g = Vec::new();
    cluster_growth(&y, &masses, k, state.n(), &mut g);
    let mut out = vec![0.0; state.n()];
    for (c, r) in state.clusters().enumerate() {
        for i in r {
            out[i] = state.m[i] * g[c];
        }
    }
    out
}

/// Reusable RK4 workspace over cluster positions and particle weights.
struct Rk4<'a> {
    k: &'a Kernel,
    n: usize,
    starts: &'a [usize],
    masses: Vec<f64>,
    growth: Vec<f64>,
    stage_y: Vec<f64>,
    stage_m: Vec<f64>,
    ky: [Vec<f64>; 4],
    km: [Vec<f64>; 4],
}

impl<'a> Rk4<'a> {
    fn new(k: &'a Kernel, n: usize, starts: &'a [usize]) -> Self {
        let nc = starts.len() - 1;
        Rk4 {
            k,
            n,
            starts,
            masses: vec![0.0; nc],
            growth: Vec::with_capacity(nc),
            stage_y: vec![0.0; nc],
            stage_m: vec![0.0; n],
            ky: std::array::from_fn(|_| vec![0.0; nc]),
            km: std::array::from_fn(|_| vec![0.0; n]),
        }
    }

    fn rhs(&mut self, stage: usize) {
        for c in 0..self.masses.len() {
            self.masses[c] = self.stage_m[self.starts[c]..self.starts[c + 1]].iter().sum();
        }
        let v = velocities_from_masses(&self.masses, self.n);
        self.ky[stage].copy_from_slice(&v);
        cluster_growth(&self.stage_y, &self.masses, self.k, self.n, &mut self.growth);
        for c in 0..self.masses.len() {
            for i in self.starts[c]..self.starts[c + 1] {
                self.km[stage][i] = self.stage_m[i] * self.growth[c];
            }
        }
    }

    /// One RK4 step of length `h` from `(y, m)`, written to `(y_out, m_out)`.
    fn step(&mut self, y: &[f64], m: &[f64], h: f64, y_out: &mut [f64], m_out: &mut [f64]) {
        let coef = [0.0, 0.5, 0.5, 1.0];
        for s in 0..4 {
            if s == 0 {
                self.stage_y.copy_from_slice(y);
                self.stage_m.copy_from_slice(m);
            } else {
                let a = coef[s] * h;
                for (c, sy) in self.stage_y.iter_mut().enumerate() {
                    *sy = y[c] + a * self.ky[s - 1][c];
                }
                for (i, sm) in self.stage_m.iter_mut().enumerate() {
                    *sm = m[i] + a * self.km[s - 1][i];
                }
            }
            self.rhs(s);
        }
        let w = h / 6.0;
        for c in 0..y.len() {
            y_out[c] = y[c] + w * (self.ky[0][c] + 2.0 * self.ky[1][c] + 2.0 * self.ky[2][c] + self.ky[3][c]);
        }
        for i in 0..m.len() {
            m_out[i] = m[i] + w * (self.km[0][i] + 2.0 * self.km[1][i] + 2.0 * self.km[2][i] + self.km[3][i]);
        }
    }
}

fn min_gap(y: &[f64]) -> f64 {
    y.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
}

impl ParticleState {
    fn cluster_positions(&self) -> Vec<f64> {
        self.starts[..self.starts.len() - 1].iter().map(|&i| self.x[i]).collect()
    }

    fn set_cluster_positions(&mut self, y: &[f64]) {
        for c in 0..y.len() {
            let (a, b) = (self.starts[c], self.starts[c + 1]);
            self.x[a..b].iter_mut().for_each(|v| *v = y[c]);
        }
    }

    /// Merges every chain of adjacent clusters whose gaps are below
    /// `gap_tol`, placing each new cluster at the weighted mean of its
    /// members. Returns the number of clusters formed.
    fn merge_close(&mut self, gap_tol: f64) -> usize {
        let nc = self.n_clusters();
        let y = self.cluster_positions();
        let mut new_starts = vec![0];
        let mut formed = Vec::new();
        let mut c = 0;
        while c < nc {
            let mut end = c;
            while end + 1 < nc && y[end + 1] - y[end] < gap_tol {
                end += 1;
            }
            let (a, b) = (self.starts[c], self.starts[end + 1]);
            if end > c {
                let mass: f64 = self.m[a..b].iter().sum();
                let moment: f64 = self.x[a..b].iter().zip(&self.m[a..b]).map(|(x, m)| x * m).sum();
                let pos = moment / mass;
                self.x[a..b].iter_mut().for_each(|v| *v = pos);
                formed.push((a..b).collect::<Vec<_>>());
            }
            new_starts.push(b);
            c = end + 1;
        }
        self.starts = new_starts;
        let count = formed.len();
        if count > 0 {
            self.events.push(CollisionEvent {
                time: self.t,
                merged_indices: formed,
            });
        }
        count
    }

    /// Advances by exactly `dt`, resolving every collision inside the step.
    pub fn step(&mut self, k: &Kernel, dt: f64, opts: &SimOptions) -> Result<()> {
        let t_end = self.t + dt;
        let max_events = opts.max_events.unwrap_or(self.n());
        let mut events_here = self.merge_close(opts.gap_tol);
        let n = self.n();
        loop {
            let h = t_end - self.t;
            if h <= 0.0 {
                self.t = t_end;
                return Ok(());
            }
            let y0 = self.cluster_positions();
            let m0 = self.m.clone();
            let starts = self.starts.clone();
            let mut rk = Rk4::new(k, n, &starts);
            let mut y1 = vec![0.0; y0.len()];
            let mut m1 = vec![0.0; n];
            rk.step(&y0, &m0, h, &mut y1, &mut m1);
            if min_gap(&y1) >= opts.gap_tol {
                self.set_cluster_positions(&y1);
                self.m = m1;
                self.t = t_end;
                return Ok(());
            }
            // Illinois regula falsi on `min_gap − gap_tol/2`, bisection fallback.
            let target = 0.5 * opts.gap_tol;
            let (mut lo, mut flo) = (0.0, min_gap(&y0) - target);
            let (mut hi, mut fhi) = (h, min_gap(&y1) - target);
            let mut side = 0i8;
            let mut found = false;
            for _ in 0..200 {
                if hi - lo <= opts.event_tol {
                    break;
                }
                let mut c = (lo * fhi - hi * flo) / (fhi - flo);
                if !(c > lo && c < hi) {
                    c = 0.5 * (lo + hi);
                }
                rk.step(&y0, &m0, c, &mut y1, &mut m1);
                let fc = min_gap(&y1) - target;
                if fc.abs() <= 0.25 * opts.gap_tol {
                    hi = c;
                    found = true;
                    break;
                }
                if fc < 0.0 {
                    hi = c;
                    fhi = fc;
                    if side == -1 {
                        flo *= 0.5;
                    }
                    side = -1;
                } else {
                    lo = c;
                    flo = fc;
                    if side == 1 {
                        fhi *= 0.5;
                    }
                    side = 1;
                }
            }
            if !found {
                rk.step(&y0, &m0, hi, &mut y1, &mut m1);
            }
            self.set_cluster_positions(&y1);
            self.m = m1;
            self.t = if hi == h { t_end } else { self.t + hi };
            events_here += self.merge_close(opts.gap_tol);
            if events_here > max_events {
                return Err(Error::StepTooLarge {
                    t: t_end - dt,
                    max_events,
                });
            }
        }
    }

    /// Advances to `target` in steps of at most `opts.dt`.
    pub fn advance_to(&mut self, k: &Kernel, target: f64, opts: &SimOptions) -> Result<()> {
        while self.t < target {
            let remaining = target - self.t;
            // avoid a sliver step from accumulated roundoff
            let h = if remaining <= opts.dt * (1.0 + 1e-9) { remaining } else { opts.dt };
            self.step(k, h, opts)?;
            if h == remaining {
                self.t = target;
            }
        }
        Ok(())
    }
}

/// Integrates from `initial` up to `t_final`, returning a snapshot at each
/// requested time (sorted, clipped to `[0, t_final]`). The final state is
/// always included as the last snapshot.
pub fn simulate(
    initial: &ParticleState,
    k: &Kernel,
    t_final: f64,
    snap_times: &[f64],
    opts: &SimOptions,
) -> Result<Vec<ParticleState>> {
    opts.validate()?;
    if !(t_final.is_finite() && t_final >= 0.0) {
        return Err(Error::Parse(format!("t_final must be non-negative, got {t_final}")));
    }
    let mut state = initial.clone();
    state.merge_close(opts.gap_tol);
    let mut times: Vec<f64> = snap_times
        .iter()
        .copied()
        .filter(|t| t.is_finite() && *t >= state.t && *t <= t_final)
        .collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    if times.last() != Some(&t_final) {
        times.push(t_final);
    }
    let mut out = Vec::with_capacity(times.len());
    for t in times {
        state.advance_to(k, t, opts)?;
        out.push(state.clone());
    }
    Ok(out)
}

/// Uniform snapshot grid `0, T/count, …, T`.
pub fn uniform_times(t_final: f64, count: usize) -> Vec<f64> {
    (0..=count).map(|i| t_final * (i as f64 / count as f64)).collect()
}

/// `(M̄, R̄)` with `M̄ = max mᵢ^in e^{‖S‖∞ T}` and `R̄ = X̄ + M̄T`.
pub fn envelope_bounds(initial: &ParticleState, k: &Kernel, t_final: f64) -> (f64, f64) {
    let m_max = initial.m_in.iter().cloned().fold(0.0, f64::max);
    let m_bar = m_max * (k.sup_norms().s * t_final).exp();
    (m_bar, initial.x_bar + m_bar * t_final)
}

/// Sublinearity check for the weight law: returns `(max |ṁᵢ|, C(1 + max mₖ))`
/// with `C = ‖S‖∞ M̄`; the first must not exceed the second.
pub fn sublinearity_check(state: &ParticleState, k: &Kernel, m_bar: f64) -> (f64, f64) {
    let rhs = weight_rhs(state, k);
    let worst = rhs.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let m_max = state.m.iter().cloned().fold(0.0, f64::max);
    (worst, k.sup_norms().s * m_bar * (1.0 + m_max))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_velocity(x: &[f64], m: &[f64]) -> Vec<f64> {
        let n = x.len();
        (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        let d = x[j] - x[i];
                        let sgn = if d > 0.0 { 1.0 } else if d < 0.0 { -1.0 } else { 0.0 };
                        m[j] * sgn
                    })
                    .sum::<f64>()
                    / n as f64
            })
            .collect()
    }

    #[test]
    fn velocity_examples() {
        let s = ParticleState::new(vec![0.0], vec![1.0]).unwrap();
        assert_eq!(velocity(&s), vec![0.0]);
        let s = ParticleState::new(vec![-1.0, 1.0], vec![1.0, 1.0]).unwrap();
        assert_eq!(velocity(&s), vec![0.5, -0.5]);
        let s = ParticleState::new(vec![0.0, 1.0], vec![1.5, 0.5]).unwrap();
        assert_eq!(velocity(&s), vec![0.25, -0.75]);
        assert_eq!(velocity(&s), naive_velocity(s.x(), s.m()));
    }

    #[test]
    fn weight_rhs_two_particles() {
        let k = Kernel::odd_bump(1.0, 3.0).unwrap();
        let s = ParticleState::new(vec![-1.0, 1.0], vec![1.2, 0.8]).unwrap();
        let r = weight_rhs(&s, &k);
        let expected = 0.5 * 1.2 * 0.8 * k.s(2.0);
        assert!((r[0] - expected).abs() < 1e-15);
        assert!((r[0] + r[1]).abs() < 1e-15);
        assert_eq!(weight_rhs(&s, &Kernel::zero()), vec![0.0, 0.0]);
    }

    #[test]
    fn weight_rhs_matches_double_loop() {
        let k = Kernel::odd_bump(1.3, 1.0).unwrap();
        let x = vec![-0.4, 0.1, 0.35];
        let m = vec![0.7, 1.1, 1.2];
        let s = ParticleState::new(x.clone(), m.clone()).unwrap();
        let r = weight_rhs(&s, &k);
        for i in 0..3 {
            let naive: f64 = (0..3).map(|j| m[i] * m[j] * k.s(x[j] - x[i])).sum::<f64>() / 3.0;
            assert!((r[i] - naive).abs() < 1e-15);
        }
        assert!(r.iter().sum::<f64>().abs() < 1e-16);
    }

    fn opts(dt: f64) -> SimOptions {
        SimOptions::for_horizon(1.0).with_dt(dt)
    }

    #[test]
    fn symmetric_pair_collides_at_two() {
        let s = ParticleState::new(vec![-1.0, 1.0], vec![1.0, 1.0]).unwrap();
        let traj = simulate(&s, &Kernel::zero(), 3.0, &[1.0, 2.5], &opts(0.01)).unwrap();
        let end = traj.last().unwrap();
        assert_eq!(end.events().len(), 1);
        assert!((end.events()[0].time - 2.0).abs() < 1e-9);
        assert_eq!(end.events()[0].merged_indices, vec![vec![0, 1]]);
        assert!(end.x()[0].abs() < 1e-9);
        assert_eq!(end.x()[0], end.x()[1]);
        assert_eq!(traj[1].x(), end.x());
        assert!((traj[0].x()[0] + 0.5).abs() < 1e-14);
    }

    #[test]
    fn unequal_pair_collides_at_one() {
        let s = ParticleState::new(vec![0.0, 1.0], vec![1.5, 0.5]).unwrap();
        let traj = simulate(&s, &Kernel::zero(), 2.0, &[], &opts(0.003)).unwrap();
        let end = traj.last().unwrap();
        assert!((end.events()[0].time - 1.0).abs() < 1e-9);
        assert!((end.x()[0] - 0.25).abs() < 1e-9);
    }

    #[test]
    fn symmetric_triple_merges_once() {
        let s = ParticleState::with_unit_weights(vec![-1.0, 0.0, 1.0]).unwrap();
        assert_eq!(velocity(&s), vec![2.0 / 3.0, 0.0, -2.0 / 3.0]);
        let traj = simulate(&s, &Kernel::zero(), 2.0, &[], &opts(0.01)).unwrap();
        let end = traj.last().unwrap();
        assert_eq!(end.events().len(), 1);
        assert!((end.events()[0].time - 1.5).abs() < 1e-9);
        assert_eq!(end.n_clusters(), 1);
        assert!(end.x()[1].abs() < 1e-9);
    }

    #[test]
    fn single_particle_is_static() {
        let s = ParticleState::new(vec![0.3], vec![1.0]).unwrap();
        let k = Kernel::odd_bump(1.0, 1.0).unwrap();
        let traj = simulate(&s, &k, 5.0, &[], &opts(0.1)).unwrap();
        assert_eq!(traj[0].x(), &[0.3]);
        assert_eq!(traj[0].m(), &[1.0]);
        assert!(traj[0].events().is_empty());
    }

    #[test]
    fn rejects_invalid_initial_data() {
        assert!(ParticleState::new(vec![0.0, 0.0], vec![1.0, 1.0]).is_err());
        assert!(ParticleState::new(vec![0.0, 1.0], vec![2.5, -0.5]).is_err());
        assert!(ParticleState::new(vec![0.0, 1.0], vec![1.0, 1.1]).is_err());
        let err = ParticleState::new(vec![0.0, 1.0], vec![2.5, -0.5]).unwrap_err();
        assert!(err.to_string().contains("weights must be positive"));
    }

    #[test]
    fn envelope_examples() {
        let s = ParticleState::new(vec![-1.0, 1.0], vec![1.0, 1.0]).unwrap();
        assert_eq!(envelope_bounds(&s, &Kernel::zero(), 2.0), (1.0, 3.0));
        assert_eq!(envelope_bounds(&s, &Kernel::zero(), 0.0), (1.0, 1.0));
        let k = Kernel::odd_bump(1.0, 1.0).unwrap();
        let (mb, rb) = envelope_bounds(&s, &k, 2.0);
        let expected = (0.132_059_281_855_560_926_7f64 * 2.0).exp();
        assert!((mb - expected).abs() < 1e-8);
        assert!((rb - (1.0 + 2.0 * mb)).abs() < 1e-15);
    }

    #[test]
    fn collision_partition_brackets_events() {
        let s = ParticleState::with_unit_weights(vec![-3.0, -1.0, 1.0, 3.0]).unwrap();
        let traj = simulate(&s, &Kernel::zero(), 10.0, &[], &opts(0.05)).unwrap();
        let p = traj[0].collision_partition(10.0);
        assert_eq!(p.first(), Some(&0.0));
        assert_eq!(p.last(), Some(&10.0));
        assert!(p.windows(2).all(|w| w[0] < w[1]));
        assert!(p.len() <= 4 + 1);
    }

    #[test]
    fn snapshot_round_trip() {
        let s = ParticleState::with_unit_weights(vec![-1.0, 0.0, 1.0]).unwrap();
        let traj = simulate(&s, &Kernel::zero(), 2.0, &[], &opts(0.01)).unwrap();
        let e = &traj[0];
        let back = ParticleState::from_snapshot(e.t(), e.x().to_vec(), e.m().to_vec(), &e.cluster_ids()).unwrap();
        assert_eq!(back.n_clusters(), 1);
        assert!(ParticleState::from_snapshot(0.0, vec![0.0, 1.0], vec![1.0, 1.0], &[0, 0]).is_err());
    }
}
