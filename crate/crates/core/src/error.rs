use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("parse error at data row {row}, column `{column}`: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("feature column `{0}` has no observed values in the training rows")]
    UnfittableColumn(String),

    #[error("degenerate labels: {0}")]
    DegenerateLabels(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("I/O error at {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error in {}: {source}", path.display())]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("JSON error in {}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

/// Error classes behind the CLI exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Validation,
    Runtime,
    Io,
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        // csv wraps I/O failures; surface those as I/O so exit codes stay honest
        let path = path.into();
        if source.is_io_error() {
            if let csv::ErrorKind::Io(e) = source.into_kind() {
                return Error::Io { path, source: e };
            }
            unreachable!("is_io_error implies ErrorKind::Io");
        }
        Error::Csv { path, source }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) | Error::Schema(_) => ErrorClass::Validation,
            Error::Json { .. } => ErrorClass::Validation,
            Error::Io { .. } => ErrorClass::Io,
            Error::Parse { .. }
            | Error::EmptyDataset(_)
            | Error::UnfittableColumn(_)
            | Error::DegenerateLabels(_)
            | Error::InvalidInput(_)
            | Error::Csv { .. } => ErrorClass::Runtime,
        }
    }
}
