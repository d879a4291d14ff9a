use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Every bin of a table is zero, so it cannot be max-normalized.
    #[error("degenerate table for dimension {dim}: all values are zero")]
    DegenerateTable { dim: usize },

    #[error("no layout accepted within {attempts} attempts; object rates are too high for the region")]
    RetryExhausted { attempts: usize },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("length mismatch: {left} thetas vs {right} scores")]
    LengthMismatch { left: usize, right: usize },

    #[error("training loss became non-finite at epoch {epoch}; lower the learning rate")]
    NonFiniteLoss { epoch: usize },

    #[error("histogram binning mismatch: {left} bins vs {right} bins")]
    BinningMismatch { left: usize, right: usize },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("format error in {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable kind, used in CLI error records and FFI codes.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DegenerateTable { .. } => "degenerate_table",
            Error::RetryExhausted { .. } => "retry_exhausted",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::LengthMismatch { .. } => "length_mismatch",
            Error::NonFiniteLoss { .. } => "non_finite_loss",
            Error::BinningMismatch { .. } => "binning_mismatch",
            Error::EmptyDataset => "empty_dataset",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::Config(_) => "config_error",
            Error::Format { .. } => "format_error",
            Error::Io { .. } => "io_error",
            Error::Json(_) => "json_error",
        }
    }

    /// The file the error refers to, when there is one.
    pub fn path(&self) -> Option<&std::path::Path> {
        match self {
            Error::Io { path, .. } | Error::Format { path, .. } => Some(path),
            _ => None,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }
}
