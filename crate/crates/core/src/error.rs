use thiserror::Error;

use crate::control::OptimizeReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("degenerate triangle {index}: signed area {area:e}")]
    DegenerateTriangle { index: usize, area: f64 },

    #[error("non-finite value {value} at node {node}")]
    Evaluation { node: usize, value: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not positive definite (row {row}, pivot {pivot:e})")]
    NotPositiveDefinite { row: usize, pivot: f64 },

    #[error("{solver} did not converge in {iterations} iterations (residual {residual:e})")]
    NonConvergence {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("solvers disagree by {difference:e} (allowed {allowed:e})")]
    CrossCheck { difference: f64, allowed: f64 },

    #[error("optimizer hit the iteration limit (stationarity {:e})", .best.stationarity)]
    OptimizerNonConvergence { best: Box<OptimizeReport> },

    #[error("line search stalled (stationarity {:e})", .best.stationarity)]
    LineSearchStall { best: Box<OptimizeReport> },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
