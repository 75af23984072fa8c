use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("region is unbounded and cannot be enumerated")]
    Unbounded,
    #[error("spin field has no angle at site ({0}, {1})")]
    MissingSite(i64, i64),
    #[error("invalid triangle: {0}")]
    InvalidTriangle(String),
    #[error("empty result: {0}")]
    Empty(String),
    #[error("construction failed at {step}: {reason}")]
    Construction { step: &'static str, reason: String },
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
