use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("function has empty support")]
    EmptySupport,

    #[error("resource limit exceeded: {0}")]
    Resource(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("internal consistency check failed: {0}")]
    Internal(String),

    #[error("unsupported case: {0}")]
    Unsupported(String),

    #[error("not positive-homogeneous: {0}")]
    NotPositiveHomogeneous(String),

    #[error("classification failed: {0}")]
    Classification(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("comparison failure: {0}")]
    Comparison(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
