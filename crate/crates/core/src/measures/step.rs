use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::io::fmt_f64;

/// Tail values closer than this are treated as equal when forming L1 distances.
pub const TAIL_TOL: f64 = 1e-12;

/// Right-continuous piecewise-constant function on the real line.
///
/// `values[0]` is the value on `(-inf, breakpoints[0])`, `values[k]` the value
/// on `[breakpoints[k-1], breakpoints[k])` and the last entry the value at
/// `+inf`. The representation is canonical: breakpoints are strictly
/// increasing and every breakpoint carries a non-zero jump.
#[derive(Debug, Clone, PartialEq)]
pub struct StepFunction {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
}

impl StepFunction {
    pub fn new(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if values.len() != breakpoints.len() + 1 {
            return Err(Error::InvalidStepFunction(format!(
                "{} breakpoints need {} values, got {}",
                breakpoints.len(),
                breakpoints.len() + 1,
                values.len()
            )));
        }
        if breakpoints.iter().chain(values.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidStepFunction("non-finite entry".into()));
        }
        if breakpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidStepFunction(
                "breakpoints must be strictly increasing".into(),
            ));
        }
        Ok(Self::canonical(breakpoints, values))
    }

    /// Builds from sorted (possibly repeated) positions and the value to the
    /// right of each; repeated positions keep the last value.
    pub fn from_sorted_jumps(left_tail: f64, points: &[(f64, f64)]) -> Result<Self> {
        let mut bps: Vec<f64> = Vec::with_capacity(points.len());
        let mut vals = vec![left_tail];
        for &(x, v) in points {
            if let Some(&last) = bps.last() {
                if x < last {
                    return Err(Error::InvalidStepFunction("jump positions not sorted".into()));
                }
                if x == last {
                    *vals.last_mut().unwrap() = v;
                    continue;
                }
            }
            bps.push(x);
            vals.push(v);
        }
        StepFunction::new(bps, vals)
    }

    fn canonical(breakpoints: Vec<f64>, values: Vec<f64>) -> Self {
        let mut bps = Vec::with_capacity(breakpoints.len());
        let mut vals = Vec::with_capacity(values.len());
        vals.push(values[0]);
        for (b, v) in breakpoints.into_iter().zip(values.into_iter().skip(1)) {
            if v != *vals.last().unwrap() {
                bps.push(b);
                vals.push(v);
            }
        }
        StepFunction {
            breakpoints: bps,
            values: vals,
        }
    }

    pub fn constant(c: f64) -> Self {
        StepFunction {
            breakpoints: vec![],
            values: vec![c],
        }
    }

    /// Jump from `lo` to `hi` at `at`.
    pub fn heaviside(at: f64, lo: f64, hi: f64) -> Self {
        Self::canonical(vec![at], vec![lo, hi])
    }

    /// Piecewise-constant function of cell averages on the uniform grid whose
    /// first face is `left_face`; the tails extend the outer cells.
    pub fn from_cells(left_face: f64, dx: f64, cells: &[f64], left_tail: f64, right_tail: f64) -> Self {
        let n = cells.len();
        let mut bps = Vec::with_capacity(n + 1);
        let mut vals = Vec::with_capacity(n + 2);
        vals.push(left_tail);
        for (i, &c) in cells.iter().enumerate() {
            bps.push(left_face + i as f64 * dx);
            vals.push(c);
        }
        bps.push(left_face + n as f64 * dx);
        vals.push(right_tail);
        Self::canonical(bps, vals)
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn left_tail(&self) -> f64 {
        self.values[0]
    }

    pub fn right_tail(&self) -> f64 {
        *self.values.last().unwrap()
    }

    /// `(position, jump)` pairs.
    pub fn jumps(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.breakpoints
            .iter()
            .zip(self.values.windows(2))
            .map(|(&b, w)| (b, w[1] - w[0]))
    }

    /// Index of the interval containing `x` (right-continuous).
    pub fn interval_index(&self, x: f64) -> usize {
        self.breakpoints.partition_point(|&b| b <= x)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.values[self.interval_index(x)]
    }

    pub fn total_variation(&self) -> f64 {
        self.values.windows(2).map(|w| (w[1] - w[0]).abs()).sum()
    }

    pub fn is_non_decreasing(&self) -> bool {
        self.values.windows(2).all(|w| w[0] <= w[1])
    }

    /// Non-decreasing with tails `-1/2` and `+1/2` (to within `tol`).
    pub fn is_shifted_cdf(&self, tol: f64) -> bool {
        self.is_non_decreasing()
            && (self.left_tail() + 0.5).abs() <= tol
            && (self.right_tail() - 0.5).abs() <= tol
    }

    /// Smallest interval containing every breakpoint, if any.
    pub fn support_of_variation(&self) -> Option<(f64, f64)> {
        Some((*self.breakpoints.first()?, *self.breakpoints.last()?))
    }

    /// Exact `∫_a^b f dx` for `a ≤ b`.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        let mut k = self.interval_index(a);
        let mut left = a;
        let mut acc = 0.0;
        while k < self.breakpoints.len() && self.breakpoints[k] < b {
            acc += self.values[k] * (self.breakpoints[k] - left);
            left = self.breakpoints[k];
            k += 1;
        }
        acc + self.values[k] * (b - left)
    }

    /// Mean value on `[a, b]`; exactly the piece value when no breakpoint
    /// falls strictly inside.
    pub fn average(&self, a: f64, b: f64) -> f64 {
        let k = self.interval_index(a);
        if self.breakpoints.get(k).is_none_or(|&next| next >= b) {
            return self.values[k];
        }
        self.integral(a, b) / (b - a)
    }

    /// Exact `∫ |f - g| dx` over the merged partition.
    pub fn l1_distance(&self, other: &StepFunction) -> Result<f64> {
        if (self.left_tail() - other.left_tail()).abs() > TAIL_TOL
            || (self.right_tail() - other.right_tail()).abs() > TAIL_TOL
        {
            return Err(Error::MismatchedTails {
                left_a: self.left_tail(),
                right_a: self.right_tail(),
                left_b: other.left_tail(),
                right_b: other.right_tail(),
            });
        }
        let (a, b) = (&self.breakpoints, &other.breakpoints);
        let (mut i, mut j) = (0usize, 0usize);
        let mut prev: Option<f64> = None;
        let mut total = 0.0;
        while i < a.len() || j < b.len() {
            let next = match (a.get(i), b.get(j)) {
                (Some(&x), Some(&y)) => x.min(y),
                (Some(&x), None) => x,
                (None, Some(&y)) => y,
                (None, None) => unreachable!(),
            };
            if let Some(p) = prev {
                total += (self.values[i] - other.values[j]).abs() * (next - p);
            }
            if i < a.len() && a[i] == next {
                i += 1;
            }
            if j < b.len() && b[j] == next {
                j += 1;
            }
            prev = Some(next);
        }
        Ok(total)
    }

    /// Writes `tails,<left>,<right>` followed by the header
    /// `breakpoint,value_left,value_right` and one row per breakpoint.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::WriterBuilder::new().flexible(true).from_writer(w);
        wtr.write_record(["tails", &fmt_f64(self.left_tail()), &fmt_f64(self.right_tail())])?;
        wtr.write_record(["breakpoint", "value_left", "value_right"])?;
        for (k, &b) in self.breakpoints.iter().enumerate() {
            wtr.write_record([
                fmt_f64(b),
                fmt_f64(self.values[k]),
                fmt_f64(self.values[k + 1]),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_reader(r);
        let mut records = rdr.records();
        let parse = |s: &str| -> Result<f64> {
            s.trim()
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("bad number {s:?}: {e}")))
        };
        let tails = records
            .next()
            .ok_or_else(|| Error::Parse("empty step-function file".into()))??;
        if tails.len() != 3 || &tails[0] != "tails" {
            return Err(Error::Parse("first row must be tails,<left>,<right>".into()));
        }
        let (left, right) = (parse(&tails[1])?, parse(&tails[2])?);
        let header = records
            .next()
            .ok_or_else(|| Error::Parse("missing header row".into()))??;
        if header.iter().collect::<Vec<_>>() != ["breakpoint", "value_left", "value_right"] {
            return Err(Error::Parse("unexpected header row".into()));
        }
        let mut bps = Vec::new();
        let mut vals = vec![left];
        for rec in records {
            let rec = rec?;
            if rec.len() != 3 {
                return Err(Error::Parse("expected 3 columns".into()));
            }
            let (b, vl, vr) = (parse(&rec[0])?, parse(&rec[1])?, parse(&rec[2])?);
            if vl != *vals.last().unwrap() {
                return Err(Error::Parse(format!("value_left at {b} does not continue the previous value")));
            }
            bps.push(b);
            vals.push(vr);
        }
        if *vals.last().unwrap() != right {
            return Err(Error::Parse("last value_right disagrees with right tail".into()));
        }
        StepFunction::new(bps, vals)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn riemann_l1(f: &StepFunction, g: &StepFunction, lo: f64, hi: f64, n: usize) -> f64 {
        let h = (hi - lo) / n as f64;
        (0..n)
            .map(|i| {
                let x = lo + (i as f64 + 0.5) * h;
                (f.eval(x) - g.eval(x)).abs() * h
            })
            .sum()
    }

    #[test]
    fn right_continuous_evaluation() {
        let f = StepFunction::heaviside(0.0, -0.5, 0.5);
        assert_eq!(f.eval(-1e-300), -0.5);
        assert_eq!(f.eval(0.0), 0.5);
    }

    #[test]
    fn canonical_form_merges_zero_jumps() {
        let f = StepFunction::new(vec![0.0, 1.0, 2.0], vec![-0.5, 0.0, 0.0, 0.5]).unwrap();
        assert_eq!(f.breakpoints(), &[0.0, 2.0]);
        assert_eq!(f.values(), &[-0.5, 0.0, 0.5]);
    }

    #[test]
    fn rejects_unsorted_breakpoints() {
        assert!(StepFunction::new(vec![1.0, 0.0], vec![0.0, 1.0, 2.0]).is_err());
        assert!(StepFunction::new(vec![1.0], vec![0.0]).is_err());
    }

    #[test]
    fn l1_of_identical_is_zero() {
        let f = StepFunction::new(vec![-1.0, 1.0], vec![-0.5, 0.0, 0.5]).unwrap();
        assert_eq!(f.l1_distance(&f).unwrap(), 0.0);
    }

    #[test]
    fn l1_of_shifted_heaviside() {
        let f = StepFunction::heaviside(0.0, -0.5, 0.5);
        let g = StepFunction::heaviside(0.25, -0.5, 0.5);
        assert!((f.l1_distance(&g).unwrap() - 0.25).abs() < 1e-16);
    }

    #[test]
    fn l1_two_jump_vs_one_jump_matches_riemann_oracle() {
        // N = 2 equal masses at -1, 1 versus their merged state at 0
        let f = StepFunction::new(vec![-1.0, 1.0], vec![-0.5, 0.0, 0.5]).unwrap();
        let g = StepFunction::heaviside(0.0, -0.5, 0.5);
        let exact = f.l1_distance(&g).unwrap();
        let oracle = riemann_l1(&f, &g, -2.0, 2.0, 1_000_000);
        assert!((exact - 1.0).abs() < 1e-15);
        assert!((exact - oracle).abs() < 1e-5);
    }

    #[test]
    fn mismatched_tails_error() {
        let f = StepFunction::heaviside(0.0, -0.5, 0.5);
        let g = StepFunction::constant(0.5);
        assert!(matches!(f.l1_distance(&g), Err(Error::MismatchedTails { .. })));
    }

    #[test]
    fn shifted_cdf_has_unit_variation() {
        let f = StepFunction::new(vec![-1.0, 0.3, 2.0], vec![-0.5, -0.1, 0.2, 0.5]).unwrap();
        assert!(f.is_shifted_cdf(0.0));
        assert_eq!(f.total_variation(), 1.0);
    }

    #[test]
    fn from_cells_extends_tails() {
        let f = StepFunction::from_cells(-1.0, 0.5, &[-0.5, 0.0, 0.0, 0.5], -0.5, 0.5);
        assert_eq!(f.breakpoints(), &[-0.5, 0.5]);
        assert_eq!(f.eval(0.0), 0.0);
    }

    #[test]
    fn integral_is_exact() {
        let f = StepFunction::new(vec![0.0, 1.0], vec![-0.5, 0.25, 0.5]).unwrap();
        assert!((f.integral(-1.0, 2.0) - (-0.5 + 0.25 + 0.5)).abs() < 1e-15);
        assert!((f.integral(0.5, 0.75) - 0.0625).abs() < 1e-15);
        assert_eq!(f.integral(1.0, 1.0), 0.0);
    }

    #[test]
    fn csv_round_trip() {
        let f = StepFunction::new(vec![-1.0, 0.1, 0.7], vec![-0.5, -0.2, 0.3, 0.5]).unwrap();
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("tails,"));
        let g = StepFunction::read_csv(buf.as_slice()).unwrap();
        assert_eq!(f, g);
    }
}
