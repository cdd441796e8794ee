use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the library.
///
/// The variants are grouped so that callers (notably the CLI) can map them
/// onto distinct exit codes: configuration problems, data problems, and the
/// "no counterfactual exists" outcome.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("consistency error: {0}")]
    Consistency(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("training instance {0} is in-bag for every tree (no out-of-bag trees)")]
    NoOob(usize),

    #[error("reference set is empty")]
    EmptyReference,

    #[error("no reference point satisfies the counterfactual constraint")]
    NoCounterfactual,

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("serialization error: {0}")]
    Serialization(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by the input data rather than by arguments or
    /// configuration.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Io { .. }
                | Error::Schema(_)
                | Error::Parse { .. }
                | Error::Format(_)
                | Error::Consistency(_)
                | Error::NoOob(_)
                | Error::Degenerate(_)
                | Error::Serialization(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
