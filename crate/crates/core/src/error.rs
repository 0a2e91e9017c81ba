use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("line {line}, column '{column}': cannot parse '{field}' as a number")]
    NonNumeric {
        line: u64,
        column: String,
        field: String,
    },

    #[error("line {line}: ragged row (expected {expected} fields, found {found})")]
    RaggedRow {
        line: u64,
        expected: usize,
        found: usize,
    },

    #[error("dataset is empty: {0}")]
    Empty(&'static str),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("column '{column}' is constant over its observed entries")]
    ConstantColumn { column: String },

    #[error("column '{column}' has {observed} observed entries, at least {required} required")]
    TooFewObserved {
        column: String,
        observed: usize,
        required: usize,
    },

    #[error("imputed cells do not match held-out cells: {0}")]
    CellMismatch(String),

    #[error("matrix is not symmetric")]
    NotSymmetric,

    #[error("matrix is not positive definite (pivot {pivot} at index {index})")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    #[error("singular system (pivot {pivot:e} at index {index})")]
    Singular { index: usize, pivot: f64 },

    #[error(
        "regression for feature {feature} is singular; the other features are collinear \
         (try a ridge penalty lambda > 0)"
    )]
    SingularRegression { feature: usize },

    #[error("dimension mismatch: {0}")]
    Shape(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("objective became non-finite during the M-update")]
    NonFiniteObjective,
}
