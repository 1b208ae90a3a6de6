use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration or input data (layouts, corpora, configs).
    #[error("configuration error: {0}")]
    Config(String),

    /// API misuse: a precondition documented on the operation was violated.
    #[error("usage error: {0}")]
    Usage(String),

    /// Malformed external file content.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// Training diverged or produced non-finite values.
    #[error("training error at epoch {epoch}, batch {batch}: {msg}")]
    Train {
        epoch: usize,
        batch: usize,
        msg: String,
    },

    /// An enumeration would exceed the configured state cap.
    #[error("size cap exceeded: enumeration needs {required} states, cap is {cap}")]
    Size { required: usize, cap: usize },

    #[error("model corruption: {0}")]
    ModelCorrupt(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("toml error: {0}")]
    Toml(#[from] toml::de::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
