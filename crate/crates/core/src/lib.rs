//! Spectral variational toolkit for the fractional critical equation
//! `(-Delta)^s u = |u|^{2*_s - 2} u` on a periodic box.

pub mod cli;
pub mod concentration;
pub mod equivariance;
pub mod error;
mod fft;
pub mod fractional;
pub mod grid;
pub mod quadrature;
pub mod variational;

pub use error::{Error, Result};
pub use grid::{Field, GridSpec, SpectralField};
