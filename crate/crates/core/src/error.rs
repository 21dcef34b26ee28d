use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("format error: {0}")]
    Format(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("reference error: {0}")]
    Reference(String),
    #[error("cluster error: {0}")]
    Cluster(String),
    #[error("sampling error: {0}")]
    Sampling(String),
    #[error("input error: {0}")]
    Input(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("transform spec error: {0}")]
    Spec(String),
    #[error("training error: {0}")]
    Training(String),
    #[error("workspace error: {0}")]
    Workspace(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Spec(_) => 2,
            Error::Io { .. } | Error::Workspace(_) => 3,
            Error::Format(_)
            | Error::Validation(_)
            | Error::Shape(_)
            | Error::Reference(_)
            | Error::Cluster(_)
            | Error::Sampling(_)
            | Error::Input(_) => 4,
            Error::Numeric(_) | Error::Training(_) => 5,
        }
    }
}
