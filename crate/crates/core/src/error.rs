use thiserror::Error;

/// Errors raised anywhere in the extraction, modelling and evaluation chain.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A required file column is absent or a record cannot be parsed.
    #[error("{file}: {message}")]
    Schema { file: String, message: String },

    #[error("dimension mismatch: expected {expected} predictors, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// Stratification cannot place both classes in every fold or split.
    #[error("stratification failed: {0}")]
    Stratification(String),

    #[error("unsupported model document `{format}` version {found} (expected version {expected})")]
    ModelVersion {
        format: String,
        found: u32,
        expected: u32,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn schema(file: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Schema {
            file: file.into(),
            message: message.into(),
        }
    }

    /// True for errors caused by malformed input files rather than by the computation.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Schema { .. } | Error::Csv(_) | Error::Json(_) | Error::Io(_)
        )
    }
}
