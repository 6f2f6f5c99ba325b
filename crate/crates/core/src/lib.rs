//! Desk-scale numerical verification of the local index theorem for Dirac
//! operators on model geometries.
//!
//! The crate is organized bottom-up:
//! - [`clifford`]: exact Clifford algebra, supertrace, spin representation;
//! - [`charclass`]: forms with scalar/matrix coefficients, Â and Chern character;
//! - [`geometry`]: flat tori, round spheres and the b-cylinder;
//! - [`operators`]: Dirac operators, connection Laplacians, Lichnerowicz residual;
//! - [`heat`]: parametrix recursion and spectral heat kernels;
//! - [`getzler`]: rescaled kernels, the harmonic-oscillator limit and Mehler's formula;
//! - [`renorm`]: finite-part integrals and renormalized traces;
//! - [`index`]: end-to-end index comparison.

pub mod blade;
pub mod charclass;
pub mod clifford;
pub mod error;
pub mod geometry;
pub mod getzler;
pub mod heat;
pub mod index;
pub mod linalg;
pub mod matrix;
pub mod operators;
pub mod quadrature;
pub mod renorm;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::{Exact, Scalar};
