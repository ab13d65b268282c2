use smol_core::SmolError;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, LabError>;

#[derive(Debug, Error)]
pub enum LabError {
    #[error(transparent)]
    Core(#[from] SmolError),

    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },

    #[error("config {path}: {message}")]
    Config { path: String, message: String },

    #[error("invalid config field `{field}`: {reason}")]
    Field { field: String, reason: String },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("device is not calibrated: fit theta_max and eta with the device at a known depth (calibration protocol, `smol calibrate`) before localizing recorded frames")]
    Uncalibrated,

    #[error("{0}")]
    Campaign(String),
}

impl LabError {
    pub fn field(field: impl Into<String>, reason: impl Into<String>) -> Self {
        LabError::Field {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        LabError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
