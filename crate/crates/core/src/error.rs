use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the crate.
///
/// The variants fall into three families that the CLI maps onto exit codes:
/// bad input (1), numerical failure (2) and broken internal invariants (3).
#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("ragged CSV: row {row} has {found} fields, expected {expected}")]
    Ragged {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("missing values present: {0}")]
    MissingValues(String),

    #[error("spectrum too short: need {needed} eigenvalues, have {available}")]
    SpectrumTooShort { needed: usize, available: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("invariant violated: {0}")]
    Invariant(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// Process exit code the CLI uses for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numerical(_) => 2,
            Error::Invariant(_) => 3,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
