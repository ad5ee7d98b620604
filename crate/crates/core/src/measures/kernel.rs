use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::golden_section_max;

/// Kernel families available for the weight coupling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    Zero,
    OddBump,
}

/// Which derivative of the coupling kernel to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Derivative {
    /// `S` itself.
    Value,
    /// `phi = S'`.
    First,
    /// `phi' = S''`.
    Second,
}

/// Sup-norms of `S`, `phi = S'` and `phi' = S''`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SupNorms {
    pub s: f64,
    pub phi: f64,
    pub dphi: f64,
}

/// Odd, compactly supported weight-coupling kernel.
///
/// The `OddBump` family is `S(x) = kappa * x * exp(-1 / (r^2 - x^2))` on
/// `(-r, r)` and zero elsewhere; it is smooth, odd and supported in
/// `[-r, r]`. Sup-norms are computed once at construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kernel {
    family: KernelFamily,
    kappa: f64,
    radius: f64,
    sup: SupNorms,
}

// exp(-1/q) underflows to zero for 1/q beyond this
const UNDERFLOW_EXPONENT: f64 = 745.0;

/// Number of grid points used to bracket the maxima in `sup_norms`.
pub const SUP_GRID_POINTS: usize = 20_001;

impl Kernel {
    pub fn zero() -> Self {
        Kernel {
            family: KernelFamily::Zero,
            kappa: 0.0,
            radius: 0.0,
            sup: SupNorms::default(),
        }
    }

    pub fn odd_bump(kappa: f64, radius: f64) -> Result<Self> {
        if !kappa.is_finite() {
            return Err(Error::Parse(format!("kernel amplitude must be finite, got {kappa}")));
        }
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::Parse(format!("kernel radius must be positive, got {radius}")));
        }
        let mut k = Kernel {
            family: KernelFamily::OddBump,
            kappa,
            radius,
            sup: SupNorms::default(),
        };
        k.sup = k.compute_sup_norms();
        Ok(k)
    }

    pub fn new(family: KernelFamily, kappa: f64, radius: f64) -> Result<Self> {
        match family {
            KernelFamily::Zero => Ok(Kernel::zero()),
            KernelFamily::OddBump => Kernel::odd_bump(kappa, radius),
        }
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// Support radius `r`; zero for the zero kernel.
    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn is_zero(&self) -> bool {
        self.family == KernelFamily::Zero || self.kappa == 0.0
    }

    /// The kernel `x -> S(-x) = -S(x)`.
    pub fn reflected(&self) -> Kernel {
        let mut k = *self;
        k.kappa = -k.kappa;
        k
    }

    /// Cached `(‖S‖∞, ‖φ‖∞, ‖φ′‖∞)`.
    pub fn sup_norms(&self) -> SupNorms {
        self.sup
    }

    pub fn eval(&self, x: f64, order: Derivative) -> f64 {
        if self.family == KernelFamily::Zero {
            return 0.0;
        }
        let r = self.radius;
        if x.abs() >= r {
            return 0.0;
        }
        let q = r * r - x * x;
        if 1.0 / q > UNDERFLOW_EXPONENT {
            return 0.0;
        }
        let e = (-1.0 / q).exp();
        let kappa = self.kappa;
        match order {
            Derivative::Value => kappa * x * e,
            Derivative::First => kappa * e * (1.0 - 2.0 * x * x / (q * q)),
            Derivative::Second => {
                let q2 = q * q;
                let x3 = x * x * x;
                kappa * e * (-6.0 * x / q2 - 8.0 * x3 / (q2 * q) + 4.0 * x3 / (q2 * q2))
            }
        }
    }

    #[inline]
    pub fn s(&self, x: f64) -> f64 {
        self.eval(x, Derivative::Value)
    }

    #[inline]
    pub fn phi(&self, x: f64) -> f64 {
        self.eval(x, Derivative::First)
    }

    #[inline]
    pub fn dphi(&self, x: f64) -> f64 {
        self.eval(x, Derivative::Second)
    }

    fn compute_sup_norms(&self) -> SupNorms {
        SupNorms {
            s: self.sup_of(Derivative::Value),
            phi: self.sup_of(Derivative::First),
            dphi: self.sup_of(Derivative::Second),
        }
    }

    /// Dense grid on `[-r, r]`, then golden-section refinement inside the
    /// bracket of every grid-local maximum of `|f|` that comes within a
    /// factor of two of the grid maximum.
    fn sup_of(&self, order: Derivative) -> f64 {
        if self.is_zero() {
            return 0.0;
        }
        let r = self.radius;
        let n = SUP_GRID_POINTS;
        let h = 2.0 * r / (n - 1) as f64;
        let xs: Vec<f64> = (0..n).map(|i| -r + i as f64 * h).collect();
        let vals: Vec<f64> = xs.iter().map(|&x| self.eval(x, order).abs()).collect();
        let grid_max = vals.iter().cloned().fold(0.0, f64::max);
        let mut best = grid_max;
        for i in 1..n - 1 {
            if vals[i] >= vals[i - 1] && vals[i] >= vals[i + 1] && vals[i] >= 0.5 * grid_max {
                let (_, v) = golden_section_max(xs[i - 1], xs[i + 1], 1e-13 * r, |x| {
                    self.eval(x, order).abs()
                });
                best = best.max(v);
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> Kernel {
        Kernel::odd_bump(1.0, 1.0).unwrap()
    }

    #[test]
    fn value_at_half() {
        let k = unit();
        let expected = 0.5 * (-4.0f64 / 3.0).exp();
        assert!((k.s(0.5) - expected).abs() < 1e-16);
        assert!((k.s(0.5) - 0.131_798_569_057_863_385).abs() < 1e-15);
    }

    #[test]
    fn zero_at_origin_and_outside_support() {
        let k = unit();
        assert_eq!(k.s(0.0), 0.0);
        for order in [Derivative::Value, Derivative::First, Derivative::Second] {
            assert_eq!(k.eval(1.5, order), 0.0);
            assert_eq!(k.eval(-1.5, order), 0.0);
            assert_eq!(k.eval(1.0, order), 0.0);
        }
    }

    #[test]
    fn derivatives_match_central_differences() {
        let k = Kernel::odd_bump(1.7, 0.8).unwrap();
        let h = 1e-5;
        for i in 1..40 {
            let x = -0.78 + i as f64 * 0.039;
            let fd1 = (k.s(x + h) - k.s(x - h)) / (2.0 * h);
            let fd2 = (k.phi(x + h) - k.phi(x - h)) / (2.0 * h);
            assert!((fd1 - k.phi(x)).abs() < 1e-6 * (1.0 + k.phi(x).abs()), "x={x}");
            assert!((fd2 - k.dphi(x)).abs() < 1e-5 * (1.0 + k.dphi(x).abs()), "x={x}");
        }
    }

    #[test]
    fn sup_norm_matches_closed_form_maximiser() {
        // d/dx [x exp(-1/(1-x^2))] = 0  <=>  1 - x^2 = sqrt(2) x
        let x_star = (6f64.sqrt() - 2f64.sqrt()) / 2.0;
        let s_star = x_star * (-1.0 / (1.0 - x_star * x_star)).exp();
        let sup = unit().sup_norms();
        assert!((sup.s - s_star).abs() < 1e-8 * s_star);
        // golden value from 40-digit arithmetic
        assert!((sup.s - 0.132_059_281_855_560_926_7).abs() < 1e-9);
        assert!(sup.phi > 0.0 && sup.dphi > sup.phi);
    }

    #[test]
    fn zero_kernel_norms_vanish() {
        let k = Kernel::zero();
        assert_eq!(k.sup_norms(), SupNorms::default());
        assert_eq!(k.s(0.3), 0.0);
    }

    #[test]
    fn sup_norms_scale_linearly() {
        let a = Kernel::odd_bump(1.0, 0.7).unwrap().sup_norms();
        let b = Kernel::odd_bump(2.0, 0.7).unwrap().sup_norms();
        assert!((b.s - 2.0 * a.s).abs() < 1e-12);
        assert!((b.phi - 2.0 * a.phi).abs() < 1e-12);
        assert!((b.dphi - 2.0 * a.dphi).abs() < 1e-10);
    }

    #[test]
    fn reflected_kernel_negates() {
        let k = unit();
        let kr = k.reflected();
        for x in [-0.7, -0.2, 0.1, 0.55] {
            assert_eq!(kr.s(x), k.s(-x));
        }
        assert_eq!(kr.sup_norms(), k.sup_norms());
    }

    #[test]
    fn rejects_bad_radius() {
        assert!(Kernel::odd_bump(1.0, 0.0).is_err());
        assert!(Kernel::odd_bump(1.0, f64::NAN).is_err());
    }
}
