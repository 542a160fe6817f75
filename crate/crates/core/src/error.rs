use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Which half of a differentiation pass produced a value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pass {
    Forward,
    Backward,
}

impl std::fmt::Display for Pass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Pass::Forward => f.write_str("forward"),
            Pass::Backward => f.write_str("backward"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },

    #[error("non-finite value produced by {op} during the {pass} pass")]
    NonFinite { op: &'static str, pass: Pass },

    #[error("invalid input to {op}: {detail}")]
    Input { op: &'static str, detail: String },

    #[error("usage error: {0}")]
    Usage(String),

    #[error("architecture error: {0}")]
    Architecture(String),

    #[error("growth error: {0}")]
    Growth(String),

    #[error("persistence error: {0}")]
    Persistence(String),

    #[error("prune error: {0}")]
    Prune(String),

    #[error("batch {batch}: {source}")]
    Batch {
        batch: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("cycle {cycle}: {source}")]
    Cycle {
        cycle: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("format error in {file}: {detail}")]
    Format { file: String, detail: String },

    #[error("verification error: {0}")]
    Verification(String),

    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),

    #[error("comparison error: {0}")]
    Comparison(String),

    #[error("export error: {0}")]
    Export(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl Error {
    pub(crate) fn dim(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Dimension {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_batch(self, batch: usize) -> Self {
        Error::Batch {
            batch,
            source: Box::new(self),
        }
    }

    pub(crate) fn in_cycle(self, cycle: usize) -> Self {
        Error::Cycle {
            cycle,
            source: Box::new(self),
        }
    }
}
