//! Sticky-particle simulation of weighted 1D opinion dynamics with attractive
//! Coulomb interaction, together with the tools used to compare its empirical
//! CDF against the nonlocal Burgers equation
//! `∂ₜF + ∂ₓ(−F²) = S[F]`.

pub mod dynamics;
pub mod entropy;
pub mod experiments;
pub mod error;
pub mod flux;
pub mod io;
pub mod measures;
pub mod pde;
pub mod quadrature;

pub use error::{Error, Result};
