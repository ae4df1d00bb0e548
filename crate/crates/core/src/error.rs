use thiserror::Error;

use crate::det_solver::RefinementLevel;

/// Errors raised by the solvers, validators and scenario loader.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("inner iteration did not reach tolerance {tol:e} after {iterations} iterations (residual {residual:e})")]
    InnerNonConvergence { iterations: usize, residual: f64, tol: f64 },

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("state left the guard radius {radius:e} at t = {t} (|x| = {norm:e})")]
    StabilityBreach { t: f64, norm: f64, radius: f64 },

    #[error("refinement stalled above tolerance {tol:e}")]
    NoConvergence { tol: f64, history: Vec<RefinementLevel> },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    /// Short machine-readable tag used in CLI error objects.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "invalid_input",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::GridMismatch(_) => "grid_mismatch",
            Error::InnerNonConvergence { .. } => "inner_non_convergence",
            Error::Singular(_) => "singular",
            Error::StabilityBreach { .. } => "stability_breach",
            Error::NoConvergence { .. } => "no_convergence",
            Error::Validation(_) => "validation",
            Error::Precondition(_) => "precondition",
            Error::Io(_) => "io",
            Error::Parse(_) => "parse",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
