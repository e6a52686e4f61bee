use std::path::PathBuf;

/// Error type shared by every module in this crate.
#[derive(Debug, thiserror::Error)]
pub enum CoreError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("schema violation in {file} line {line}: {message}")]
    Schema {
        file: String,
        line: usize,
        message: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("model build failed at {layer}: {message}")]
    Build { layer: String, message: String },

    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, CoreError>;

impl CoreError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CoreError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn schema(file: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        CoreError::Schema {
            file: file.into(),
            line,
            message: message.into(),
        }
    }
}
