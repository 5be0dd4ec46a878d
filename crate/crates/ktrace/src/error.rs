use std::path::PathBuf;

/// Error type shared by every module in the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed row {row}: {msg}")]
    MalformedRow { row: usize, msg: String },

    #[error("unknown dataset format `{0}` (expected `generic` or `assistments`)")]
    UnknownFormat(String),

    #[error("dataset is empty after filtering")]
    EmptyDataset,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("label `{0}` is not assigned to any skill")]
    UnassignedLabel(String),

    #[error("label vocabulary mismatch: {0}")]
    VocabMismatch(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("serialization error: {0}")]
    Serialization(String),
}

impl Error {
    /// Coarse category used by callers that map errors to exit codes.
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Io { .. } => ErrorCategory::Io,
            Error::Numerical(_) => ErrorCategory::Numerical,
            Error::Serialization(_) => ErrorCategory::Io,
            _ => ErrorCategory::Validation,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Validation,
    Numerical,
    Io,
}

impl ErrorCategory {
    pub fn code(self) -> &'static str {
        match self {
            ErrorCategory::Validation => "validation",
            ErrorCategory::Numerical => "numeric",
            ErrorCategory::Io => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
