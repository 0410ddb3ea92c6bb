//! Spectral observability laboratory for the wave equation on model domains.

pub mod cli;
pub mod error;
pub mod geometry;
pub mod gram;
pub mod hum;
pub mod linalg;
pub mod operators;
pub mod quadrature;
pub mod sampling;
pub mod spectral;
pub mod special;
pub mod tolerances;
pub mod visco;
pub mod wave;

pub use error::{Error, Result};
