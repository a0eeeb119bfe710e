//! Simulation and analysis toolkit for delivering light from integrated waveguides
//! to a linear chain of trapped ions, and for measuring the resulting crosstalk.
//!
//! - [`mode_solver`]: guided modes of rectangular channel waveguides.
//! - [`taper`]: inverse-taper mode expansion and adiabaticity.
//! - [`ion_chain`]: equilibrium positions of ions in a harmonic trap.
//! - [`beam_train`]: facet-plane channel layout, 4f imaging and crosstalk.
//! - [`design`]: the magnification / pitch / waist / NA constraint system.
//! - [`slit_scan`]: slit-scan beam profiling, stitching, deconvolution and extraction.
//! - [`pipeline`]: end-to-end delivery and metrology scenarios.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod beam_train;
pub mod config;
pub mod constants;
pub mod design;
pub mod error;
pub mod fft;
pub mod field;
pub mod ion_chain;
pub mod mode_solver;
pub mod pipeline;
pub mod slit_scan;
pub mod taper;
pub mod units;

pub use error::{Error, ErrorKind, Result, Stage};
pub use field::ScalarField2D;
