use std::path::PathBuf;

use thiserror::Error;

use crate::formats::Format;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A descriptor, parameter range or argument violates its documented bounds.
    #[error("constraint violated: {0}")]
    Constraint(String),

    #[error("value not representable: {0}")]
    Range(String),

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("invalid operand: {0}")]
    InvalidOperand(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("format mismatch: expected {expected}, got {found}")]
    FormatMismatch { expected: Format, found: Format },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("cannot parse {what} from {input:?}")]
    Parse { what: &'static str, input: String },

    #[error("corrupt data in {path}: {msg}")]
    CorruptData { path: PathBuf, msg: String },

    #[error("checksum mismatch for {path}: expected {expected}, got {actual}")]
    Checksum {
        path: PathBuf,
        expected: String,
        actual: String,
    },

    #[error("training diverged (seed {seed}, epoch {epoch}): {msg}")]
    Training { seed: u64, epoch: usize, msg: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("model file error: {0}")]
    ModelFile(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn corrupt(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::CorruptData {
            path: path.into(),
            msg: msg.into(),
        }
    }
}
