use thiserror::Error;

/// Errors raised across the simulator and estimator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("buffer length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("received buffer and replica do not overlap")]
    EmptyOverlap,
    #[error("series too short: {len} samples, need at least {need}")]
    SeriesTooShort { len: usize, need: usize },
    #[error("delay of {toa} samples exceeds the observation window of {max} samples")]
    DelayOutOfRange { toa: f64, max: f64 },
    #[error("degenerate configuration: {0}")]
    Degenerate(String),
    #[error("preamble not found")]
    PreambleNotFound,
    #[error("estimation failed: {0}")]
    EstimationFailed(String),
    #[error("malformed model blob: {0}")]
    BadModel(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
