use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension {dim} exceeds the configured maximum {max}")]
    DimensionLimit { dim: usize, max: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("state is not faithful: eigenvalue {eigenvalue:e} (index {index}) is below {threshold:e}")]
    NotFaithful {
        index: usize,
        eigenvalue: f64,
        threshold: f64,
    },

    #[error("ill-conditioned operation: {0}")]
    Condition(String),

    #[error("internal consistency failure: {0}")]
    Consistency(String),

    #[error("invalid field `{field}`: {message}")]
    Parse { field: String, message: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
