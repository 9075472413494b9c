use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid size: {0}")]
    InvalidSize(String),

    #[error("window ({j}, {k}) out of range for n = {n}")]
    WindowOutOfRange { j: usize, k: usize, n: usize },

    #[error("degenerate window ({j}, {k}): endpoints coincide")]
    DegenerateWindow { j: usize, k: usize },

    #[error("invalid level {ell} for n = {n}")]
    InvalidLevel { ell: u32, n: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("insufficient replication: {reps} reps, need at least {required}")]
    InsufficientReplication { reps: usize, required: usize },

    #[error("calibration failed: {0}")]
    CalibrationFailure(String),

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("experiment error: {0}")]
    Experiment(String),

    #[error("storage error: {0}")]
    Storage(#[from] std::io::Error),

    #[error("checksum mismatch in {0}")]
    ChecksumMismatch(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("malformed record: {0}")]
    Decode(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
