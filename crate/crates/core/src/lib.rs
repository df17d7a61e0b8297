//! Gaussian random spherical eigenfunctions and the Euler characteristic of
//! their excursion sets.
//!
//! The crate is organised bottom-up:
//!
//! * [`specfun`] special functions and quadrature,
//! * [`legendre_identities`] closed forms for associated Legendre integrals,
//! * [`eigenfield`] sampling, field/jet evaluation and jet covariance,
//! * [`excursion_geometry`] mesh and Morse estimators of the EPC,
//! * [`chaos_expansion`] Wiener-chaos coefficients and their oracles,
//! * [`experiments`] the Monte Carlo harness and its report.

pub mod chaos_expansion;
pub mod eigenfield;
mod error;
pub mod excursion_geometry;
pub mod experiments;
pub mod legendre_identities;
pub mod specfun;

pub use error::{Error, Result};

/// Library version embedded in every output header.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// λ_ℓ = ℓ(ℓ+1), the (negated) Laplace eigenvalue of degree ℓ.
#[inline]
pub fn eigenvalue(ell: usize) -> f64 {
    (ell * (ell + 1)) as f64
}
