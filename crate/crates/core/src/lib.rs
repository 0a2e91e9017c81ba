//! Linear imputation of missing values.
//!
//! The centerpiece is [`oli`], which treats the imputed values and the
//! per-feature regression coefficients as one least-squares problem and solves
//! it by block coordinate descent with a monotone objective. [`irmi`] and
//! [`baseline`] provide the comparison methods, [`synthetic`] and [`bench`]
//! the simulation and benchmark harness, and [`cli`] the command-line front end.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod baseline;
pub mod bench;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod irmi;
pub mod linalg;
pub mod oli;
pub mod rng;
pub mod stats;
pub mod synthetic;

pub use dataset::{Dataset, HeldOut, Imputation};
pub use error::{Error, Result};
pub use linalg::Matrix;
pub use oli::{fit, FitResult, OliConfig};

/// Crate version, embedded in every report.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
