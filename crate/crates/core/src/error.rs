use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the estimation library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid bandwidth {0}: must be finite and strictly positive")]
    InvalidBandwidth(f64),

    #[error("invalid sample count {0}: must be at least 1")]
    InvalidCount(u64),

    #[error("no candidate bandwidth constant produced a valid cross-validation score")]
    NoValidBandwidth,

    #[error("invalid cross-validation input: {0}")]
    InvalidCrossValidation(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid batch: {0}")]
    InvalidBatch(String),

    #[error("invalid evaluation grid: {0}")]
    InvalidGrid(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid spline basis: {0}")]
    InvalidBasis(String),

    #[error("singular system (smallest eigenvalue {min_eigenvalue:e})")]
    SingularSystem { min_eigenvalue: f64 },

    #[error("estimate has no defined interior grid point")]
    EmptyEstimate,

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("snapshot corrupted: {0}")]
    Corruption(String),

    #[error("unsupported snapshot version {found} (supported: {supported})")]
    Version { found: u32, supported: u32 },

    #[error("{path}: line {line}: parse error: {message}")]
    Parse { path: PathBuf, line: u64, message: String },

    #[error("{path}: line {line}: data error: {message}")]
    Data { path: PathBuf, line: u64, message: String },

    #[error("internal invariant violated: {0}")]
    Invariant(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
