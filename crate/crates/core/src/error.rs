use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("failed to decode {}: {message}", path.display())]
    Decode { path: PathBuf, message: String },

    #[error("no frames in {}", .0.display())]
    NoFrames(PathBuf),

    #[error("frame sequence is not contiguous: expected index {expected}, found {found}")]
    NonContiguous { expected: u64, found: u64 },

    #[error("dimension mismatch: expected {expected_w}x{expected_h}, got {actual_w}x{actual_h}")]
    DimensionMismatch {
        expected_w: usize,
        expected_h: usize,
        actual_w: usize,
        actual_h: usize,
    },

    #[error("invalid region: {0}")]
    InvalidRegion(String),

    #[error("background model has not seen a frame yet")]
    UninitializedModel,

    #[error("patch has zero variance")]
    ConstantPatch,

    #[error("monitor outcome refers to unknown object {0}")]
    UnknownObject(u64),

    /// Configuration or script validation failure; `key` is the dotted path of the offending field.
    #[error("{key}: {message}")]
    Config { key: String, message: String },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    pub(crate) fn dims(expected: (usize, usize), actual: (usize, usize)) -> Self {
        Error::DimensionMismatch {
            expected_w: expected.0,
            expected_h: expected.1,
            actual_w: actual.0,
            actual_h: actual.1,
        }
    }

    /// Process exit status for the command-line front end: 2 for configuration
    /// problems, 3 for everything that comes from reading or writing data.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } => 2,
            _ => 3,
        }
    }
}
