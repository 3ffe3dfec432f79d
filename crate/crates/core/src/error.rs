use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("i/o error: {0}")]
    Stream(#[from] io::Error),

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("unsupported version {0}")]
    UnsupportedVersion(u32),

    #[error("empty frame")]
    EmptyFrame,

    #[error("invalid frame: {0}")]
    InvalidFrame(String),

    #[error("quaternion {index} deviates from unit norm by {deviation:e} (limit 1e-3)")]
    QuaternionDeviation { index: usize, deviation: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("index {index} out of range for {len} elements")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("duplicate index {0}")]
    DuplicateIndex(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("corrupt stream: {0}")]
    CorruptStream(String),

    #[error("config digest mismatch: bitstream {stream} vs model {model}")]
    DigestMismatch { stream: String, model: String },

    #[error("frame {frame}: {source}")]
    Frame {
        frame: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("weight file: {0}")]
    Weights(String),

    #[error("training aborted at iteration {iteration}: {reason}")]
    TrainingAborted { iteration: usize, reason: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn at_frame(self, frame: usize) -> Self {
        Error::Frame { frame, source: Box::new(self) }
    }
}
