//! Quantum noise of a self-phase-locked type-II optical parametric
//! oscillator above threshold: analytic quadrature spectra, two-mode
//! Gaussian states, entanglement and EPR criteria, and parameter inference.
//!
//! Variances are dimensionless with the vacuum (shot-noise) level at 1.

// `!(x > 0.0)` deliberately rejects NaN; 4x4 matrix code reads best indexed.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod config;
pub mod criteria;
pub mod error;
pub mod fit;
pub mod gaussian;
pub mod model;
pub mod run;

pub use config::{load_config, RunConfig};
pub use error::{Error, Result};
