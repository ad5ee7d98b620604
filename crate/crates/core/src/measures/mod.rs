//! Step functions, coupling kernels and their exact convolution.

mod kernel;
mod step;

pub use kernel::{Derivative, Kernel, KernelFamily, SupNorms, SUP_GRID_POINTS};
pub use step::{StepFunction, TAIL_TOL};

use crate::error::{Error, Result};

/// `(φ⋆f)(z)` for `order == 0`, `(φ′⋆f)(z)` for `order == 1`, where `φ = S′`.
///
/// Exact for step functions: with jumps `J_j` at `a_j`,
/// `(φ⋆f)(z) = Σ J_j S(z − a_j)` and `(φ′⋆f)(z) = Σ J_j φ(z − a_j)`.
/// Only jumps within the kernel radius of `z` are visited.
pub fn convolve_step(k: &Kernel, f: &StepFunction, z: f64, order: u8) -> Result<f64> {
    let d = match order {
        0 => Derivative::Value,
        1 => Derivative::First,
        other => return Err(Error::Parse(format!("convolution order must be 0 or 1, got {other}"))),
    };
    if k.is_zero() {
        return Ok(0.0);
    }
    let r = k.radius();
    let bps = f.breakpoints();
    let vals = f.values();
    let lo = bps.partition_point(|&a| a <= z - r);
    let hi = bps.partition_point(|&a| a < z + r);
    let mut acc = 0.0;
    for j in lo..hi {
        acc += (vals[j + 1] - vals[j]) * k.eval(z - bps[j], d);
    }
    Ok(acc)
}
