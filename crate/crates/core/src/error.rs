use thiserror::Error;

/// Errors raised across the enhancement toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("non-finite spectrum value in {channel} channel at bin {bin}")]
    NonFinite { channel: &'static str, bin: usize },

    #[error("coherence {0} outside the estimator domain")]
    CoherenceDomain(String),

    #[error("size mismatch: expected {expected}, got {actual}")]
    SizeMismatch { expected: usize, actual: usize },

    #[error("two channels required, got {0}")]
    ChannelCount(u16),

    #[error("sample rate {actual} Hz does not match configured {expected} Hz")]
    SampleRate { expected: u32, actual: u32 },

    #[error("unsupported audio format: {0}")]
    Format(String),

    #[error("reference signal is silent")]
    SilentReference,

    #[error("wav: {0}")]
    Wav(#[from] hound::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
