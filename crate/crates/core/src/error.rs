use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to parse {path}: {message}")]
    Parse { path: String, message: String },

    #[error("invalid value for `{field}`: {reason}")]
    Invalid { field: String, reason: String },

    #[error("unknown random stream label `{0}`")]
    UnknownStream(String),

    #[error("feature vectors differ in length ({left} vs {right})")]
    LengthMismatch { left: usize, right: usize },

    #[error("all group counts are zero")]
    EmptyCounts,

    #[error("optimizer budget must be positive")]
    ZeroBudget,

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invariant violated: {0}")]
    Invariant(String),
}

impl Error {
    pub fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse { .. }
            | Error::Invalid { .. }
            | Error::UnknownStream(_)
            | Error::LengthMismatch { .. }
            | Error::EmptyCounts
            | Error::ZeroBudget => 1,
            Error::Io { .. } => 2,
            Error::Invariant(_) => 3,
        }
    }
}
