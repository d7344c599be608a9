//! Radial Dirac operators for a test electron in the static interior of
//! Reissner-Weyl-Nordstrom black holes.
//!
//! Lengths are measured in electron reduced-Compton units. Downstream
//! numerics work in the rescaled view where every length is divided by the
//! inner horizon radius (or the double horizon in the extremal case).

pub mod coordinates;
pub mod numerics;
pub mod operator;
pub mod spacetime;
pub mod spectral;

pub use num_complex::Complex64;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

use thiserror::Error;

/// Errors raised by the physics layers above [`numerics`].
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("unsupported configuration: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Numerics(#[from] numerics::NumericsError),
}

pub type Result<T> = std::result::Result<T, Error>;
