use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A special-function argument left its domain, e.g. `delta` too small
    /// for the dimension.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid config field `{field}`: {reason}")]
    InvalidConfig { field: &'static str, reason: String },

    #[error("line {line}: {reason}")]
    Ingest { line: usize, reason: String },

    #[error("observation {index}: {source}")]
    Step {
        index: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("empty input stream")]
    EmptyStream,

    #[error("malformed trace: {0}")]
    Trace(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field,
            reason: reason.into(),
        }
    }
}
