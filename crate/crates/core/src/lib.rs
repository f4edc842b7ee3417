//! Heat kernels of Schrödinger operators with complex potentials, evaluated on
//! the Riemann surface of the square root.

pub mod error;
pub mod kernels;
pub mod oracle;
pub mod borel;
pub mod deformation;
pub mod potential;
pub mod quadrature;
pub mod special;
pub mod surface;

pub use error::{Error, Result};
