//! Error type shared by every module of the core crate.

use alloc::string::String;

/// Failures surfaced by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// A sector or matrix exceeds the configured enumeration/storage limit.
    #[error("capacity exceeded: {what} needs {requested}, limit is {limit}")]
    Capacity {
        what: &'static str,
        requested: usize,
        limit: usize,
    },
    #[error("index {index} out of range (size {size})")]
    IndexOutOfRange { index: usize, size: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("matrix is not orthogonal (max deviation {deviation:e})")]
    NotOrthogonal { deviation: f64 },
    #[error("non-finite input to {0}")]
    NonFinite(&'static str),
    /// The wave function vanishes (or its determinant is singular) at this configuration.
    #[error("ansatz node at configuration {0:#x}")]
    Node(u64),
    #[error("no configuration with nonzero amplitude found after {0} attempts")]
    InitializationFailed(usize),
    #[error("linear solve failed after shift escalation (final shift {shift:e})")]
    SolverFailure { shift: f64 },
    #[error("no convergence after {iterations} iterations")]
    NoConvergence { iterations: usize },
    #[error("empty sample set")]
    EmptyBatch,
}

pub type Result<T> = core::result::Result<T, Error>;
