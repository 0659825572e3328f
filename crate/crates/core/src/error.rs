use std::path::PathBuf;

/// Errors raised anywhere in the rolling MCMC system.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Every weight is zero (or the weight vector is empty), so no normalized
    /// estimate exists. The controller answers this by replenishing.
    #[error("degenerate weights: {0}")]
    DegenerateWeights(&'static str),

    #[error("target index {n} is out of range (last target is {last})")]
    TargetOutOfRange { n: u64, last: u64 },

    /// A caller broke a documented precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("model failure: {0}")]
    Model(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("corrupt sample database: {0}")]
    Corrupt(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn contract(msg: impl Into<String>) -> Error {
    Error::Contract(msg.into())
}
