use thiserror::Error;

/// Errors produced by the numerical core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum FcpError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A relative error was requested against a reference with zero weighted norm.
    #[error("degenerate denominator: {context} has zero weighted norm")]
    DegenerateDenominator { context: String },

    /// A quantile bound coincides with the central prediction, so it has no
    /// direction that could be rescaled.
    #[error("degenerate offset: {0} bound equals the central prediction")]
    DegenerateOffset(&'static str),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("iteration did not converge after {iterations} iterations (residual {residual:e})")]
    Convergence { iterations: usize, residual: f64 },

    #[error("rank deficient: {0}")]
    Rank(String),
}

pub type Result<T> = std::result::Result<T, FcpError>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(FcpError::InvalidArgument(msg.into()))
}
