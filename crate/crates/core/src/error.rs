use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("no planar pixels")]
    NoPlanarPixels,

    #[error("empty instance {0}")]
    EmptyInstance(usize),

    #[error("degenerate point set")]
    DegeneratePointSet,

    #[error("degenerate class balance: ground truth needs both foreground and background pixels")]
    DegenerateClassBalance,

    #[error("no jointly valid depth pixels")]
    NoValidDepth,

    #[error("generator failed: {0}")]
    Generator(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// True for errors caused by the outside world (files, formats) rather
    /// than by the numerical content of valid inputs.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. } | Error::Format { .. })
    }
}
