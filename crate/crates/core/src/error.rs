use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the `cosub` library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid product pair (v={v}, u={u}) for V={v_count}: need 1 <= u < v <= V")]
    InvalidPair { v: usize, u: usize, v_count: usize },

    #[error("invalid adjacency matrix: {0}")]
    InvalidAdjacency(String),

    #[error("inconsistent co-subscription counts: {0}")]
    InconsistentCounts(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("invalid dataset: {0}")]
    InvalidData(String),

    #[error("invalid parameter: {0}")]
    Precondition(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("sampling failed: {0}")]
    Sampling(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("at iteration {iteration}: {source}")]
    Chain {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{0}")]
    Summary(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Maps a CSV writer error, keeping the path for I/O failures.
    pub(crate) fn csv_write(path: &std::path::Path, e: csv::Error) -> Self {
        if e.is_io_error() {
            match e.into_kind() {
                csv::ErrorKind::Io(io) => Error::io(path, io),
                _ => unreachable!(),
            }
        } else {
            Error::Csv(e)
        }
    }

    /// True for errors caused by bad input files or arguments rather than
    /// by a failure during computation.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. }
                | Error::InvalidData(_)
                | Error::InvalidAdjacency(_)
                | Error::InconsistentCounts(_)
                | Error::InvalidPair { .. }
                | Error::Io { .. }
                | Error::Csv(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
