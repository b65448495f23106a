//! Numerical laboratory for Feynman–Kac semigroups of symmetric jump
//! processes on the line.
//!
//! The crate discretizes `-L + V` for a family of jump kernels and
//! potentials, computes ground states and heat kernels, evaluates the
//! rate-function calculus behind intrinsic ultracontractivity, and
//! simulates the underlying Lévy processes for independent cross-checks.

pub mod bounds;
pub mod discretize;
pub mod error;
pub mod model;
pub mod montecarlo;
pub mod quad;
pub mod rates;
pub mod spectral;

pub use error::{Error, Result};
