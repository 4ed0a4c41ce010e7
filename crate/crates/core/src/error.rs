//! Error types shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, AtlasError>;

#[derive(Debug, Error)]
pub enum AtlasError {
    #[error("I/O error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid JSON in {path}: {message}")]
    Json { path: String, message: String },

    #[error("invalid CSV: {0}")]
    Csv(String),

    #[error("missing mandatory column(s): {0}")]
    MissingColumns(String),

    #[error("label is empty after canonicalization: {raw:?}")]
    Canon { raw: String },

    #[error("not found: {0}")]
    NotFound(String),

    #[error("degenerate atlas: {0}")]
    DegenerateAtlas(String),

    #[error("hash collision: key {key:?} and {other:?} share id {id:#018x}")]
    Collision { key: String, other: String, id: u64 },

    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("corrupt atlas: {0}")]
    CorruptAtlas(String),

    #[error("unsupported schema version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("output directory is locked: {0}")]
    Locked(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl AtlasError {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        AtlasError::Io {
            path: path.into(),
            source,
        }
    }
}
