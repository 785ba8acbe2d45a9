use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cell ({col}, {row}) outside {width}x{height} grid")]
    OutOfBounds {
        col: usize,
        row: usize,
        width: usize,
        height: usize,
    },

    #[error("invalid grid spec: {0}")]
    InvalidSpec(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("embedding provider contract violated: {0}")]
    ProviderContract(String),

    #[error("label {0:?} is not in the vocabulary")]
    UnknownLabel(String),

    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("no path from ({}, {}) to ({}, {})", .start.col, .start.row, .goal.col, .goal.row)]
    NoPath {
        start: crate::grid::Cell,
        goal: crate::grid::Cell,
    },

    #[error("invalid world: {0}")]
    InvalidWorld(String),

    #[error("invalid episode: {0}")]
    InvalidEpisode(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("search state machine invariant violated: {0}")]
    Invariant(String),

    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {message}", .path.display())]
    Parse { path: PathBuf, message: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.to_string(),
        }
    }
}
