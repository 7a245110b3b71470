use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// A library error raised while reading the named file.
    #[error("{}: {source}", path.display())]
    File {
        path: PathBuf,
        #[source]
        source: ctxbias::Error,
    },

    #[error(transparent)]
    Core(#[from] ctxbias::Error),

    #[error("{}: {source}", path.display())]
    ConfigFile {
        path: PathBuf,
        #[source]
        source: toml::de::Error,
    },

    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn in_file(path: impl Into<PathBuf>, source: ctxbias::Error) -> Self {
        match source {
            // I/O errors already name their path.
            e @ ctxbias::Error::Io { .. } => CliError::Core(e),
            source => CliError::File {
                path: path.into(),
                source,
            },
        }
    }

    /// Short machine-readable category printed as `error[kind]`.
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::File { source, .. } | CliError::Core(source) => match source {
                ctxbias::Error::EmptyCorpus(_)
                | ctxbias::Error::InsufficientPool { .. }
                | ctxbias::Error::EmptyReference => "data",
                ctxbias::Error::Config(_) => "config",
                ctxbias::Error::Integrity(_) => "integrity",
                ctxbias::Error::Parse { .. } => "parse",
                ctxbias::Error::Io { .. } | ctxbias::Error::Stream(_) => "io",
            },
            CliError::ConfigFile { .. } => "config",
            CliError::Usage(_) => "usage",
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
