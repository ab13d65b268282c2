use thiserror::Error;

pub type Result<T> = std::result::Result<T, SmolError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SmolError {
    #[error("field point is {distance:.3e} m from the dipole, below the singularity limit {limit:.3e} m")]
    Singularity { distance: f64, limit: f64 },

    #[error("quaternion norm {norm} deviates from 1 by more than {tolerance}")]
    InvalidQuaternion { norm: f64, tolerance: f64 },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("sensor configuration: {0}")]
    Configuration(String),

    #[error("series has {available} samples but {required} are needed")]
    TraceTooShort { available: usize, required: usize },

    #[error("moving-mean window {window} exceeds channel length {len}")]
    WindowTooLong { window: usize, len: usize },

    #[error("frame too short: {0}")]
    InsufficientSpan(String),

    #[error("no usable signal: {0}")]
    NoSignal(String),

    #[error("R² undefined: total sum of squares is zero")]
    UndefinedR2,

    #[error("circular mean undefined: resultant vector is zero")]
    UndefinedCircularMean,

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("calibration requires the known depth z of the device (θ_max and z are not jointly identifiable)")]
    MissingKnownDepth,

    #[error("I/O: {0}")]
    Io(String),

    #[error("parse: {0}")]
    Parse(String),
}

impl From<std::io::Error> for SmolError {
    fn from(e: std::io::Error) -> Self {
        SmolError::Io(e.to_string())
    }
}

impl From<csv::Error> for SmolError {
    fn from(e: csv::Error) -> Self {
        SmolError::Parse(e.to_string())
    }
}

impl From<serde_json::Error> for SmolError {
    fn from(e: serde_json::Error) -> Self {
        SmolError::Parse(e.to_string())
    }
}
