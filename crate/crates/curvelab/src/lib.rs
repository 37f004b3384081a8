//! Numerical workbench for bilinear Hilbert transforms and maximal functions
//! along polynomial curves.
//!
//! The crate is organised bottom-up: [`polynomials`] and [`signals`] supply the
//! basic objects, [`scales`] classifies dyadic scales, [`operators`] evaluates
//! the truncated operators by quadrature, [`sharpness`] builds the explicit
//! counterexample families, [`oscillatory`] holds the stationary-phase and
//! inverse-function tooling and [`tiling`] the Whitney/tile/tree machinery.

pub mod error;
pub mod operators;
pub mod oscillatory;
pub mod polynomials;
pub mod report;
pub mod scales;
pub mod sharpness;
pub mod signals;
pub mod tiling;

pub use error::{Error, Result};
pub use polynomials::Polynomial;
pub use report::ExperimentReport;
pub use signals::{CutoffFamily, GridFunction};
