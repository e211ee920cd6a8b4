use thiserror::Error;

/// Errors raised across the library and the command-line pipelines.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain an operation accepts.
    #[error("domain error: {0}")]
    Domain(String),
    /// A numerical degeneracy (zero normaliser, all-zero weights, ...).
    #[error("numeric error: {0}")]
    Numeric(String),
    /// A configured resource cap was exceeded.
    #[error("resource error: {0}")]
    Resource(String),
    /// Invalid run configuration.
    #[error("config error: {0}")]
    Config(String),
    /// Malformed input data.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    /// Process exit code used by the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Domain(_) | Error::Parse { .. } | Error::Io { .. } => 3,
            Error::Numeric(_) | Error::Resource(_) => 4,
        }
    }
}
