//! Variance-Gamma distributions, the VG Stein equation and explicit
//! approximation bounds for bilinear sums, with the numerical substrate
//! (modified Bessel functions, adaptive quadrature) and a deterministic
//! Monte Carlo harness.

pub mod bessel;
pub mod bounds;
pub mod error;
pub mod harness;
pub mod quad;
pub mod stein;
pub mod vgdist;

pub use error::{Error, Result};
