use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the core library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty signal")]
    EmptySignal,

    #[error("undefined SDR: reference is all-zero")]
    UndefinedSdr,

    #[error("silent signal: {0}")]
    SilentSignal(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("sample-rate mismatch: expected {expected} Hz, found {found} Hz")]
    SampleRateMismatch { expected: u32, found: u32 },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("no active sources")]
    NoActiveSources,

    #[error("insufficient source bank: missing {0:?}")]
    InsufficientBank(Vec<String>),

    #[error("duplicate predicted label {0}")]
    DuplicateLabel(usize),

    #[error("degenerate calibration set: {0}")]
    DegenerateCalibration(String),

    #[error("invalid manifest: {0}")]
    Manifest(String),

    #[error("scene {scene}: {message}")]
    Scene { scene: String, message: String },

    #[error("{stage}: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error("backend: {0}")]
    Backend(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("wav: {0}")]
    Wav(#[from] hound::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_stage(self, stage: impl Into<String>) -> Self {
        Error::Stage {
            stage: stage.into(),
            source: Box::new(self),
        }
    }

    pub(crate) fn scene(scene: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Scene {
            scene: scene.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
