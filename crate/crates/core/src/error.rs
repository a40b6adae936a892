use std::path::PathBuf;

/// Errors raised anywhere in the pipeline.
///
/// Variants are grouped so the command-line front end can map them onto
/// exit codes: validation-type problems, I/O problems and numeric failures.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("build error: {0}")]
    Build(String),

    #[error("split error: {0}")]
    Split(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("unknown identifier: {0}")]
    Unknown(String),

    #[error("sampling error: {0}")]
    Sampling(String),

    #[error("evaluation error: {0}")]
    Eval(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            location: location.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by non-finite arithmetic.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::NonFinite(_))
    }

    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. })
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
