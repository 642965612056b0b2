use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A dictionary column with zero norm cannot be normalized.
    #[error("column {index} ({term}) is identically zero")]
    DegenerateColumn { index: usize, term: String },

    #[error("integration diverged at step {step}")]
    Divergence { step: usize },

    #[error("controller failure: {0}")]
    Controller(String),

    #[error("no stable cutting parameters within bounds (smallest violation {min_violation:e})")]
    Infeasible { min_violation: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

pub(crate) fn shape(msg: impl Into<String>) -> Error {
    Error::Shape(msg.into())
}
