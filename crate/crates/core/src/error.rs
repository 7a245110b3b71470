use std::path::PathBuf;

/// Errors produced anywhere in the training, biasing, decoding, or evaluation pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("no trainable data: {0}")]
    EmptyCorpus(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("insufficient pool: requested {requested}, only {available} available")]
    InsufficientPool { requested: usize, available: usize },

    #[error("empty reference")]
    EmptyReference,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Stream(#[from] std::io::Error),
}

impl Error {
    pub fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable category, used as the CLI error prefix.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::EmptyCorpus(_) => "data",
            Error::Config(_) => "config",
            Error::Integrity(_) => "integrity",
            Error::Parse { .. } => "parse",
            Error::InsufficientPool { .. } => "data",
            Error::EmptyReference => "data",
            Error::Io { .. } | Error::Stream(_) => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
