//! Kinetic-to-fractional-diffusion limit laboratory.

pub mod aux;
pub mod coefficients;
pub mod collision;
pub mod equilibria;
pub mod error;
pub mod harness;
pub mod kinetic;
pub mod macro_spectral;
pub mod params;
pub mod quadrature;
pub mod velocity;

pub use error::{Error, Result};
