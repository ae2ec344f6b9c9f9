use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("config error: {0}")]
    Config(String),

    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        expected: (usize, usize, usize),
        got: (usize, usize, usize),
    },

    #[error("unknown edit type {label:?}; valid types are: {valid}")]
    UnknownEditType { label: String, valid: String },

    #[error("numeric failure at schedule step {step}: {reason}")]
    Numeric { step: usize, reason: String },

    #[error("format error in {path}: {reason}")]
    Format { path: String, reason: String },

    #[error("manifest entry {entry}: {reason}")]
    Manifest { entry: String, reason: String },

    #[error("schedule mismatch: {0}")]
    ScheduleMismatch(String),

    #[error("unknown edit hook {0:?}")]
    UnknownHook(String),

    #[error("duplicate edit hook {0:?}")]
    DuplicateHook(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
