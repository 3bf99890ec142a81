//! Structured decomposition of sparse or dense matrices into series of N:M
//! terms, configuration search under a quality constraint, and an analytical
//! cost model of a structured-sparse accelerator running the decomposed GEMMs.

pub mod approxmm;
pub mod decomp;
pub mod error;
pub mod exec;
pub mod hwmodel;
pub mod matrix;
pub mod search;
pub mod synth;
pub mod workload;

pub use error::{Result, TasdError};
pub use exec::Execution;
pub use matrix::{DenseMatrix, NmCompressed, NmPattern, TasdConfig};
