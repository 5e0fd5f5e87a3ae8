//! Spectral statistics for products of independent rectangular complex
//! Ginibre matrices.
//!
//! Given M factors X_M ... X_1 with X_j of size N_j x N_{j-1}, N_0 = N the
//! smallest dimension and nu_j = N_j - N >= 0, the library computes
//!
//! * the limiting density of squared singular values of the product,
//!   scaled by the product of the large dimensions, through an explicit
//!   trigonometric parametrization and through direct root-solving of the
//!   fixed-point equation for its Stieltjes transform ([`density`],
//!   [`stieltjes`]);
//! * hard spectral-edge positions and moments of the limit law;
//! * the exact finite-N determinantal correlation kernel of the
//!   log-transformed squared singular values, evaluated from a
//!   residue-sum / contour-integral representation with extended-precision
//!   accumulation, together with its Laguerre cross-check for M = 1 and
//!   bulk sine-kernel scaling checks ([`kernel`]);
//! * Monte Carlo sampling of the finite ensembles with reproducible,
//!   splittable random streams and distributional test statistics
//!   ([`montecarlo`]).

pub mod cli;
pub mod dd;
pub mod density;
pub mod error;
pub mod kernel;
pub mod montecarlo;
pub mod quad;
pub mod roots;
pub mod specfun;
pub mod stieltjes;
pub mod verify;

pub use error::{Error, Result};
