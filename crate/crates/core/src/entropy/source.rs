use crate::dynamics::ParticleState;
use crate::error::{Error, Result};
use crate::measures::{convolve_step, Kernel, StepFunction};
use crate::quadrature::adaptive_gauss_legendre;

/// Relative tolerance of the adaptive quadrature in [`source_eval`].
pub const SOURCE_REL_TOL: f64 = 1e-9;

/// `S[F](x) = F(x)(φ⋆F)(x) − ∫_{−∞}^x F(z)(φ′⋆F)(z) dz` by quadrature.
///
/// `f` must be constant outside `[−2R, 2R]`. The integral starts where
/// `φ′⋆F` can first be non-zero and is split at the breakpoints of `f`,
/// each piece handled by adaptive eight-point Gauss–Legendre.
pub fn source_eval(f: &StepFunction, k: &Kernel, x: f64, radius: f64) -> Result<f64> {
    if let Some((lo, hi)) = f.support_of_variation() {
        if lo < -2.0 * radius || hi > 2.0 * radius {
            return Err(Error::UnboundedSupport { bound: 2.0 * radius });
        }
    }
    if k.is_zero() {
        return Ok(0.0);
    }
    let first = f.eval(x) * convolve_step(k, f, x, 0)?;
    let Some((a_min, _)) = f.support_of_variation() else {
        return Ok(0.0);
    };
    let start = a_min - k.radius();
    if x <= start {
        return Ok(first);
    }
    let mut cuts = vec![start];
    cuts.extend(f.breakpoints().iter().copied().filter(|&a| a > start && a < x));
    cuts.push(x);
    let mut integral = 0.0;
    for w in cuts.windows(2) {
        let fv = f.eval(0.5 * (w[0] + w[1]));
        if fv == 0.0 {
            continue;
        }
        let mut g = |z: f64| convolve_step(k, f, z, 1).unwrap_or(0.0);
        integral += fv * adaptive_gauss_legendre(w[0], w[1], SOURCE_REL_TOL, 1e-16, &mut g);
    }
    Ok(first - integral)
}

/// `(1/N²) Σ_{l,r} H(x − x_l) m_l m_r S(x_l − x_r)` with `H(0) = 1`.
pub fn discrete_source(state: &ParticleState, k: &Kernel, x: f64) -> f64 {
    if k.is_zero() {
        return 0.0;
    }
    let (xs, ms) = (state.x(), state.m());
    let n = xs.len();
    let upto = xs.partition_point(|&v| v <= x);
    let r = k.radius();
    let mut acc = 0.0;
    for l in 0..upto {
        let lo = xs.partition_point(|&v| v <= xs[l] - r);
        let hi = xs.partition_point(|&v| v < xs[l] + r);
        let inner: f64 = (lo..hi).map(|j| ms[j] * k.s(xs[l] - xs[j])).sum();
        acc += ms[l] * inner;
    }
    acc / (n * n) as f64
}

/// `S[F]` for a step function in closed form.
///
/// For `F` with jumps `J_i` at `a_i`, integrating by parts gives
/// `S[F](x) = Σ_{a_i ≤ x} J_i Σ_j J_j S(a_i − a_j)`, again a step function
/// with the breakpoints of `F`.
pub fn source_profile(f: &StepFunction, k: &Kernel) -> StepFunction {
    let bps = f.breakpoints();
    if k.is_zero() || bps.is_empty() {
        return StepFunction::constant(0.0);
    }
    let jumps: Vec<f64> = f.jumps().map(|(_, j)| j).collect();
    let r = k.radius();
    let mut values = Vec::with_capacity(bps.len() + 1);
    values.push(0.0);
    let mut acc = 0.0;
    for (i, &a) in bps.iter().enumerate() {
        let lo = bps.partition_point(|&b| b <= a - r);
        let hi = bps.partition_point(|&b| b < a + r);
        let g: f64 = (lo..hi).map(|j| jumps[j] * k.s(a - bps[j])).sum();
        acc += jumps[i] * g;
        values.push(acc);
    }
    StepFunction::new(bps.to_vec(), values).expect("breakpoints inherited from a valid step function")
}
