use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("dimension {dim} exceeds cap {cap}: {what}")]
    DimensionCap { what: &'static str, dim: usize, cap: usize },

    #[error("count overflow: {0}")]
    Overflow(String),

    #[error("covariance not factorizable: {0}")]
    NotFactorizable(String),

    #[error("quadrature did not converge after {panels} panels (last estimate {estimate:e}, residual {residual:e})")]
    QuadratureNonConvergence { panels: usize, estimate: f64, residual: f64 },

    #[error("strategy `{strategy}` does not support {model} models")]
    StrategyMismatch { strategy: &'static str, model: &'static str },

    #[error("unknown strategy `{0}`")]
    UnknownStrategy(String),

    #[error("optimizer failure: {0}")]
    Optimizer(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}
