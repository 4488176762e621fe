use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid distribution parameter: {0}")]
    InvalidParameter(String),

    #[error("trace mismatch: {0}")]
    TraceMismatch(String),

    #[error("invalid return value: {0}")]
    InvalidReturn(String),

    #[error("invalid factor: {0}")]
    InvalidFactor(String),

    #[error("gradient undefined: log-density is {0} at the evaluation point")]
    GradientUndefined(f64),

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("degenerate evidence: Z2 estimate is zero ({0} particles, all weights zero)")]
    DegenerateEvidence(usize),

    #[error("undefined: {0}")]
    Undefined(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("ODE solver failure: {0}")]
    SolverFailure(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("data error: {0}")]
    Data(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
