use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Input violates an operation's precondition.
    #[error("invalid input: {0}")]
    Invalid(String),
    /// Argument outside the mathematical domain of a function (poles, branch cuts).
    #[error("domain error: {0}")]
    Domain(String),
    /// A numerical check failed (breakdown, non-real spectrum, singular system).
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("config error at `{path}`: {msg}")]
    Config { path: String, msg: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn config(path: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config { path: path.into(), msg: msg.into() }
    }
}
