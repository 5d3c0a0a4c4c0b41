use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// `(rows, cols)` of a matrix operand.
pub type Shape = (usize, usize);

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: Shape,
        right: Shape,
    },

    #[error("index error in {op}: index {index} out of range for {len}")]
    Index {
        op: &'static str,
        index: usize,
        len: usize,
    },

    #[error("usage error: {0}")]
    Usage(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("format error: {0}")]
    Format(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("training diverged at epoch {epoch}")]
    Divergence { epoch: usize },

    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error("compatibility error: {0}")]
    Compatibility(String),

    #[error("checkpoint version mismatch: found {found}, expected {expected}")]
    Version { found: u32, expected: u32 },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn shape(op: &'static str, left: Shape, right: Shape) -> Self {
        Error::Shape { op, left, right }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
