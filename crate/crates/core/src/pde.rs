//! Finite-volume reference solver for `∂ₜF + ∂ₓ(−F²) = S̃[F]`.
//!
//! Engquist–Osher fluxes for the hyperbolic part, Strang splitting with an
//! explicit midpoint rule for the source. The solver only shares the kernel
//! and step-function types with the particle code.

use std::io::Write;

use crate::entropy::{balance_source, EntropyField, Slice};
use crate::error::{Error, Result};
use crate::flux::Flux;
use crate::io::fmt_f64;
use crate::measures::{Kernel, StepFunction};

/// CFL number used for `dt ≤ CFL·Δx` (`|A′| ≤ 1` on `[−1/2, 1/2]`).
pub const CFL: f64 = 0.45;

/// Cell averages on `[−L, L]` with constant ghost states, `∓1/2` for
/// shifted CDFs.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    pub t: f64,
    pub half_width: f64,
    pub dx: f64,
    pub cells: Vec<f64>,
    pub ghosts: (f64, f64),
}

/// Domain half-width `L = 2R̄ + r`.
pub fn domain_half_width(r_bar: f64, kernel_radius: f64) -> f64 {
    2.0 * r_bar + kernel_radius
}

impl GridField {
    /// Exact cell averages of `f` on the grid with `ceil(2L/Δx)` cells of width
    /// `Δx`, the domain widened symmetrically to fit.
    pub fn from_step(f: &StepFunction, half_width: f64, dx: f64) -> Result<Self> {
        GridField::from_cell_averages(half_width, dx, (f.left_tail(), f.right_tail()), |a, b| f.average(a, b))
    }

    /// Grid on `[−L, L]` (widened to a whole number of cells) whose cell
    /// values are `average(a, b)` over each cell `[a, b]`.
    pub fn from_cell_averages<F: Fn(f64, f64) -> f64>(
        half_width: f64,
        dx: f64,
        ghosts: (f64, f64),
        average: F,
    ) -> Result<Self> {
        if !(dx > 0.0 && half_width > 0.0) {
            return Err(Error::Parse(format!("grid needs dx > 0 and L > 0, got {dx}, {half_width}")));
        }
        let n = (2.0 * half_width / dx).ceil() as usize;
        let l = 0.5 * n as f64 * dx;
        let cells = (0..n)
            .map(|i| {
                let a = -l + i as f64 * dx;
                average(a, a + dx)
            })
            .collect();
        Ok(GridField {
            t: 0.0,
            half_width: l,
            dx,
            cells,
            ghosts,
        })
    }

    pub fn centers(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.cells.len()).map(move |i| -self.half_width + (i as f64 + 0.5) * self.dx)
    }

    pub fn to_step(&self) -> StepFunction {
        StepFunction::from_cells(-self.half_width, self.dx, &self.cells, self.ghosts.0, self.ghosts.1)
    }

    pub fn total_variation(&self) -> f64 {
        let (lg, rg) = self.ghosts;
        let mut tv = (self.cells[0] - lg).abs() + (rg - self.cells[self.cells.len() - 1]).abs();
        tv += self.cells.windows(2).map(|w| (w[1] - w[0]).abs()).sum::<f64>();
        tv
    }

    pub fn is_non_decreasing(&self) -> bool {
        self.cells.windows(2).all(|w| w[0] <= w[1])
    }

    /// Writes `x_center,F_value` rows.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["x_center", "F_value"])?;
        for (x, v) in self.centers().zip(&self.cells) {
            wtr.write_record([fmt_f64(x), fmt_f64(*v)])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Engquist–Osher flux for `A(u) = −u²`.
#[inline]
pub fn engquist_osher(ul: f64, ur: f64) -> f64 {
    let l = ul.min(0.0);
    let r = ur.max(0.0);
    -l * l - r * r
}

/// Balance-law source at cell centres. On a uniform grid the kernel is only
/// ever sampled at multiples of `Δx`, so those samples are tabulated.
struct SourceTable {
    table: Vec<f64>,
}

impl SourceTable {
    fn new(k: &Kernel, dx: f64) -> Self {
        let kr = k.reflected();
        let w = if k.is_zero() { 0 } else { (k.radius() / dx).ceil() as usize };
        SourceTable {
            table: (0..=w).map(|d| kr.s(d as f64 * dx)).collect(),
        }
    }

    fn eval(&self, cells: &[f64], ghosts: (f64, f64), out: &mut Vec<f64>) {
        let n = cells.len();
        out.clear();
        out.resize(n, 0.0);
        if self.table.len() <= 1 {
            return;
        }
        // face j sits left of cell j; face n is the right boundary
        let jump = |j: usize| -> f64 {
            let left = if j == 0 { ghosts.0 } else { cells[j - 1] };
            let right = if j == n { ghosts.1 } else { cells[j] };
            right - left
        };
        let jumps: Vec<f64> = (0..=n).map(jump).collect();
        let w = self.table.len() - 1;
        let mut acc = 0.0;
        for j in 0..n {
            if jumps[j] != 0.0 {
                let lo = j.saturating_sub(w);
                let hi = (j + w).min(n);
                let mut g = 0.0;
                for (kk, jk) in jumps.iter().enumerate().take(hi + 1).skip(lo) {
                    if *jk == 0.0 {
                        continue;
                    }
                    // S̃ is odd: S̃(a_j − a_k) = ±table[|j − k|]
                    let s = if kk <= j { self.table[j - kk] } else { -self.table[kk - j] };
                    g += jk * s;
                }
                acc += jumps[j] * g;
            }
            out[j] = acc;
        }
    }
}

fn source_half_step(
    table: &SourceTable,
    cells: &mut [f64],
    ghosts: (f64, f64),
    h: f64,
    scratch: &mut Vec<f64>,
    mid: &mut Vec<f64>,
) {
    table.eval(cells, ghosts, scratch);
    mid.clear();
    mid.extend(cells.iter().zip(scratch.iter()).map(|(u, s)| u + 0.5 * h * s));
    table.eval(mid, ghosts, scratch);
    for (u, s) in cells.iter_mut().zip(scratch.iter()) {
        *u += h * s;
    }
}

fn hyperbolic_step(cells: &mut [f64], ghosts: (f64, f64), ratio: f64, fluxes: &mut Vec<f64>) {
    let n = cells.len();
    fluxes.clear();
    fluxes.extend((0..=n).map(|j| {
        let ul = if j == 0 { ghosts.0 } else { cells[j - 1] };
        let ur = if j == n { ghosts.1 } else { cells[j] };
        engquist_osher(ul, ur)
    }));
    for (i, u) in cells.iter_mut().enumerate() {
        *u -= ratio * (fluxes[i + 1] - fluxes[i]);
    }
}

/// One Strang-split step: half source, full hyperbolic, half source.
pub fn fv_step(field: &GridField, k: &Kernel, dt: f64) -> Result<GridField> {
    let limit = CFL * field.dx;
    if !(dt > 0.0 && dt <= limit * (1.0 + 1e-12)) {
        return Err(Error::CflViolation { dt, limit });
    }
    let table = SourceTable::new(k, field.dx);
    let mut out = field.clone();
    let (mut a, mut b, mut c) = (Vec::new(), Vec::new(), Vec::new());
    advance(&table, &mut out, dt, &mut a, &mut b, &mut c);
    Ok(out)
}

fn advance(table: &SourceTable, field: &mut GridField, dt: f64, a: &mut Vec<f64>, b: &mut Vec<f64>, c: &mut Vec<f64>) {
    let g = field.ghosts;
    source_half_step(table, &mut field.cells, g, 0.5 * dt, a, b);
    hyperbolic_step(&mut field.cells, g, dt / field.dx, c);
    source_half_step(table, &mut field.cells, g, 0.5 * dt, a, b);
    field.t += dt;
}

/// Every time level of a finite-volume run.
#[derive(Debug, Clone)]
pub struct FvTrajectory {
    pub fields: Vec<GridField>,
    pub kernel: Kernel,
}

/// Solves from `f_in` to `t_final` on `[−L, L]` with cell width `dx`, using
/// the largest uniform step not exceeding the CFL limit.
pub fn fv_solve(f_in: &StepFunction, k: &Kernel, t_final: f64, dx: f64, half_width: f64) -> Result<FvTrajectory> {
    if !f_in.is_shifted_cdf(1e-12) {
        return Err(Error::InvalidStepFunction("initial data must be non-decreasing with tails ∓1/2".into()));
    }
    if let Some((lo, hi)) = f_in.support_of_variation() {
        if lo <= -half_width || hi >= half_width {
            return Err(Error::UnboundedSupport { bound: half_width });
        }
    }
    let field = GridField::from_step(f_in, half_width, dx)?;
    fv_run(field, k, t_final)
}

/// Advances `field` to `t_final` with the largest uniform step allowed by
/// the CFL limit, keeping every time level.
pub fn fv_run(mut field: GridField, k: &Kernel, t_final: f64) -> Result<FvTrajectory> {
    let dx = field.dx;
    let t0 = field.t;
    let steps = (((t_final - t0) / (CFL * dx)).ceil() as usize).max(1);
    let dt = (t_final - t0) / steps as f64;
    let table = SourceTable::new(k, dx);
    let mut fields = Vec::with_capacity(steps + 1);
    fields.push(field.clone());
    let (mut a, mut b, mut c) = (Vec::new(), Vec::new(), Vec::new());
    for s in 0..steps {
        advance(&table, &mut field, dt, &mut a, &mut b, &mut c);
        field.t = t0 + (s + 1) as f64 * dt;
        fields.push(field.clone());
    }
    Ok(FvTrajectory { fields, kernel: *k })
}

impl FvTrajectory {
    pub fn t_final(&self) -> f64 {
        self.fields.last().map(|f| f.t).unwrap_or(0.0)
    }

    /// Linear interpolation in time between stored levels.
    pub fn at(&self, t: f64) -> GridField {
        let i = self.fields.partition_point(|f| f.t <= t);
        if i == 0 {
            return self.fields[0].clone();
        }
        if i >= self.fields.len() {
            return self.fields.last().unwrap().clone();
        }
        let (a, b) = (&self.fields[i - 1], &self.fields[i]);
        let w = (t - a.t) / (b.t - a.t);
        GridField {
            t,
            half_width: a.half_width,
            dx: a.dx,
            ghosts: a.ghosts,
            cells: a.cells.iter().zip(&b.cells).map(|(u, v)| (1.0 - w) * u + w * v).collect(),
        }
    }
}

impl EntropyField for FvTrajectory {
    fn t_final(&self) -> f64 {
        FvTrajectory::t_final(self)
    }

    fn slice(&self, t: f64) -> Result<Slice> {
        let f = self.at(t).to_step();
        let source = balance_source(&f, &self.kernel);
        Ok(Slice {
            f,
            flux: Flux::Exact,
            source,
        })
    }
}
