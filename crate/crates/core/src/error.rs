use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("product of the u-sequence is 1; the circle operator is singular")]
    DegenerateProduct,

    #[error("endpoint values of the geometric path coincide; the circle kernel is undefined")]
    DegeneratePath,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("argument {value} outside [{lo}, {hi}]")]
    OutOfRange { value: f64, lo: f64, hi: f64 },

    #[error("expected a {expected} path")]
    WrongPathKind { expected: &'static str },

    #[error("too few samples: need at least {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("dimension {dim} exceeds the budget of {budget}")]
    BudgetExceeded { dim: usize, budget: usize },

    #[error("adaptive quadrature did not reach tolerance (estimated error {estimate:e})")]
    QuadratureFailed { estimate: f64 },

    #[error("unknown experiment `{0}`")]
    UnknownExperiment(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
