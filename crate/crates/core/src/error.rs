use std::path::PathBuf;

use thiserror::Error;

/// Broad failure classes, used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Io,
    Config,
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },
    #[error("non-positive dimension: {0}x{1}x{2}")]
    NonPositiveDimension(usize, usize, usize),
    #[error("data length {got} does not match dimensions (expected {expected})")]
    LengthMismatch { expected: usize, got: usize },
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error("tensor too small: every dimension must be at least {min}, got {dims:?}")]
    TensorTooSmall { dims: [usize; 3], min: usize },
    #[error("value {value} at index {index} is outside the PGM range [0, 65535]")]
    PgmRange { index: usize, value: f64 },
    #[error("trajectory point ({u}, {w}) at frame {tau} lies outside the {width}x{height} frame")]
    OutOfBounds {
        tau: i64,
        u: f64,
        w: f64,
        width: usize,
        height: usize,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("degenerate field: zero median gradient norm")]
    DegenerateField,
    #[error("non-finite derivative output at voxel {0}")]
    NonFiniteJet(usize),
    #[error("frame score collapse at frame {0}")]
    FrameScoreCollapse(usize),
    #[error("empty kernel support at t = {0}")]
    EmptyKernelSupport(f64),
    #[error("merged direction vanished (antipodal directions)")]
    MergeDegenerate,
    #[error("frame range mismatch: {0}")]
    FrameRangeMismatch(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Io { .. }
            | Error::Format { .. }
            | Error::PgmRange { .. }
            | Error::NonPositiveDimension(..)
            | Error::LengthMismatch { .. }
            | Error::NonFinite(_)
            | Error::TensorTooSmall { .. }
            | Error::OutOfBounds { .. } => ErrorKind::Io,
            Error::Config(_)
            | Error::FrameRangeMismatch(_) => ErrorKind::Config,
            Error::DegenerateField
            | Error::NonFiniteJet(_)
            | Error::FrameScoreCollapse(_)
            | Error::EmptyKernelSupport(_)
            | Error::MergeDegenerate => ErrorKind::Numerical,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
