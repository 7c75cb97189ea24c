use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed configuration, flags or parameter combinations.
    #[error("configuration error: {0}")]
    Config(String),

    /// Parameter vectors or matrices whose shape does not match the controller.
    #[error("dimension mismatch in {what}: expected {expected}, got {actual}")]
    Dimension {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    /// A scenario or input file breaks a data invariant.
    #[error("invalid data{}: {message}", location(.file, .row))]
    Validation {
        file: Option<PathBuf>,
        row: Option<usize>,
        message: String,
    },

    #[error("household {household}: request {request} cannot be completed: {message}")]
    Infeasible {
        household: String,
        request: usize,
        message: String,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn location(file: &Option<PathBuf>, row: &Option<usize>) -> String {
    match (file, row) {
        (Some(f), Some(r)) => format!(" in {} at row {}", f.display(), r),
        (Some(f), None) => format!(" in {}", f.display()),
        (None, Some(r)) => format!(" at row {r}"),
        (None, None) => String::new(),
    }
}

impl Error {
    pub(crate) fn invalid(message: impl Into<String>) -> Self {
        Error::Validation {
            file: None,
            row: None,
            message: message.into(),
        }
    }

    pub(crate) fn at_row(file: &std::path::Path, row: usize, message: impl Into<String>) -> Self {
        Error::Validation {
            file: Some(file.to_path_buf()),
            row: Some(row),
            message: message.into(),
        }
    }
}
