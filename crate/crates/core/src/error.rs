use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("parse error in {path}: {msg}")]
    Parse { path: String, msg: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("solver diverged: {0}")]
    Diverged(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Stable one-word category, used by the CLI for machine-parsable
    /// error lines (`error[<category>]: <message>`).
    pub fn category(&self) -> &'static str {
        match self {
            Error::InvalidParameter(_) | Error::ShapeMismatch(_) => "input",
            Error::Parse { .. } => "format",
            Error::Io { .. } => "io",
            Error::Diverged(_) => "solver",
        }
    }

    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn parse(path: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Parse { path: path.into(), msg: msg.into() }
    }
}
