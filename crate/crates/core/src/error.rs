//! Error types shared across the crate.

use thiserror::Error;

/// Failures of the dense symmetric-matrix kernel.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: String, got: String },

    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("matrix is not positive definite (smallest eigenvalue {min_eigenvalue:e}, largest {max_eigenvalue:e})")]
    NotPositiveDefinite { min_eigenvalue: f64, max_eigenvalue: f64 },

    #[error("dimension {dim} exceeds the configured limit {limit}")]
    TooLarge { dim: usize, limit: usize },

    #[error("numeric failure: {0}")]
    Numeric(String),
}

/// Summary of a power iteration that ran out of steps.
#[derive(Debug, Clone, PartialEq)]
pub struct NonConvergence {
    pub arity: usize,
    pub iterations: usize,
    pub tolerance: f64,
    pub diameter_trace: Vec<f64>,
}

impl NonConvergence {
    pub fn last_diameter(&self) -> f64 {
        self.diameter_trace.last().copied().unwrap_or(f64::NAN)
    }
}

/// Failures raised while building or evaluating means.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum MeanError {
    #[error("arity mismatch: expected {expected} arguments, got {got}")]
    Arity { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("argument outside the mean's domain: {0}")]
    Domain(String),

    #[error(
        "{}-tuple iteration did not converge after {} steps (last diameter {:e}, tolerance {:e})",
        .0.arity, .0.iterations, .0.last_diameter(), .0.tolerance
    )]
    NotConverged(Box<NonConvergence>),

    #[error("iterated composition did not converge after {iterations} steps (gap {gap:e})")]
    CompositionNotConverged { iterations: usize, gap: f64 },

    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Failure of a stable reduction (fixed point of the last coordinate).
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReduceError<P: std::fmt::Debug> {
    #[error(transparent)]
    Mean(#[from] MeanError),

    #[error(
        "stable reduction did not converge after {iterations} steps (residual {residual:e}, last iterate {last:?})"
    )]
    NotConverged { last: P, residual: f64, iterations: usize },
}
