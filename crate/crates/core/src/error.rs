use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the detector, quantizer, metrics and profiling code.
#[derive(Debug, Error)]
pub enum Error {
    /// A precondition on shapes or arguments was violated.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("degenerate quantization range [{min}, {max}]")]
    DegenerateRange { min: f32, max: f32 },

    #[error("calibration does not cover activation slots: {}", .0.join(", "))]
    CalibrationCoverage(Vec<String>),

    #[error("memory tracker is not installed on this thread")]
    TrackerNotInstalled,

    #[error("{path}:{line}: {msg}")]
    Manifest { path: String, line: usize, msg: String },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("invalid container: {0}")]
    Container(String),

    #[error("metadata: {0}")]
    Metadata(#[from] serde_json::Error),

    #[error("image {path}: {msg}")]
    Image { path: PathBuf, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Shorthand for returning a [`Error::Contract`] with a formatted message.
macro_rules! contract {
    ($($arg:tt)*) => {
        return Err($crate::error::Error::Contract(format!($($arg)*)))
    };
}
pub(crate) use contract;
