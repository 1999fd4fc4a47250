use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed audio file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("unsupported audio encoding in {path}: {reason}")]
    Unsupported { path: PathBuf, reason: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    /// A caller violated an operation's precondition (shape, dimension, symmetry).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("clip has {samples} samples, fewer than one frame of {frame_len}")]
    EmptyTensor { samples: usize, frame_len: usize },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("training failed: {0}")]
    Training(String),

    #[error("desync injection failed: {0}")]
    Desync(String),

    #[error("missing artifact {path}: {hint}")]
    MissingArtifact { path: PathBuf, hint: String },

    #[error("json error on {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the command-line front end: 2 for usage and
    /// configuration problems, 3 for everything data related.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::MissingArtifact { .. } | Error::Contract(_) => 2,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
