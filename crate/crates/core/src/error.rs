use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the watermarking toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid audio: {0}")]
    InvalidAudio(String),

    #[error("unsupported WAV format: {0}")]
    WavFormat(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("SI-SNR is undefined for a silent reference channel")]
    SilentReference,

    #[error("clip too short: {got} samples, need at least {need}")]
    TooShort { got: usize, need: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("carrier capacity exceeded: k={k} exceeds embedding dimension d={d}")]
    Capacity { k: usize, d: usize },

    #[error("payload length mismatch: expected {expected} bits, got {got}")]
    PayloadLength { expected: usize, got: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("attack contract violation: {0}")]
    AttackContract(String),

    #[error("unknown attack kind: {0}")]
    UnknownAttack(String),

    #[error("feature extraction failed: {0}")]
    FeatureExtraction(String),

    #[error("optimization aborted: {0}")]
    Aborted(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
