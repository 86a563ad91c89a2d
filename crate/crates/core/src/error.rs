use thiserror::Error;

/// Errors raised across the estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("missing column `{0}` in input table")]
    MissingColumn(String),

    #[error("degenerate variable `{0}`: log-values have zero variance")]
    DegenerateVariable(String),

    #[error("row {row}: variable `{variable}`: {message}")]
    Ingestion {
        row: String,
        variable: String,
        message: String,
    },

    #[error("row {row}: variable `{variable}` has unseen level(s): {levels:?}")]
    UnseenLevel {
        row: String,
        variable: String,
        levels: Vec<String>,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value in parameter block `{block}` at epoch {epoch}")]
    NonFinite { block: String, epoch: usize },

    #[error("format error: {0}")]
    Format(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// True for errors caused by the input data rather than configuration or
    /// numerics.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::MissingColumn(_)
                | Error::DegenerateVariable(_)
                | Error::Ingestion { .. }
                | Error::UnseenLevel { .. }
                | Error::Csv(_)
                | Error::Io { .. }
                | Error::Format(_)
                | Error::Json(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
