use thiserror::Error;

/// Errors raised by the numerical layers (grid, solvers, control, oscillation).
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("step failure at time index {index}: {reason}")]
    StepFailure { index: usize, reason: String },

    #[error("divergence at time index {index}: sup norm {norm:e} exceeds blow-up guard")]
    Divergence { index: usize, norm: f64 },

    #[error("infeasible construction: null space empty, {deficit} more admitted modes needed")]
    InfeasibleConstruction { deficit: usize },

    #[error("degenerate window: empty slice mask at time index {index}")]
    DegenerateWindow { index: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
