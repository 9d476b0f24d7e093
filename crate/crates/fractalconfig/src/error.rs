use thiserror::Error;

/// Failure modes shared by every module.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error("resolution error: {0}")]
    Resolution(String),
    #[error("resource error: {0}")]
    Resource(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("certificate error: {0}")]
    Certificate(String),
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn param<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Parameter(msg.into()))
}
