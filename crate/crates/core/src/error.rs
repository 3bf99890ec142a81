use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error)]
pub enum TasdError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite entry at index {index}")]
    NonFiniteEntry { index: usize },

    #[error("invalid N:M pattern {n}:{m}")]
    InvalidPattern { n: usize, m: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("matrix is not {pattern}-compliant (row {row}, block {block})")]
    NotCompliant {
        pattern: String,
        row: usize,
        block: usize,
    },

    #[error("corrupt compressed indices: {0}")]
    CorruptIndices(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("bad magic in {0}")]
    BadMagic(PathBuf),

    #[error("bad header in {path}: {reason}")]
    BadHeader { path: PathBuf, reason: String },

    #[error("csv error: {0}")]
    Csv(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("degenerate product: reference product has zero Frobenius norm")]
    DegenerateProduct,

    #[error("quality oracle failed: {0}")]
    OracleFailure(String),

    #[error("missing calibration data for layer {0}")]
    MissingCalibration(String),

    #[error("empty calibration set for layer {0}")]
    EmptyCalibration(String),

    #[error("missing statistics for layer {0}")]
    MissingStats(String),

    #[error("configuration mixes block sizes ({0}); the hardware requires a single M")]
    MixedM(String),

    #[error("configuration {0} is not expressible on this hardware")]
    NotExpressible(String),
}

pub type Result<T, E = TasdError> = std::result::Result<T, E>;

impl TasdError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        TasdError::Io {
            path: path.into(),
            source,
        }
    }
}
