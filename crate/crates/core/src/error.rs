use std::io;

use thiserror::Error;

/// Errors surfaced by the library. Each variant maps onto one exit class of
/// the command line tool (see [`Error::exit_code`]).
#[derive(Debug, Error)]
pub enum Error {
    /// Bad configuration: unknown names, malformed files, impossible maps.
    #[error("configuration error: {0}")]
    Config(String),

    /// An operation was called in a state or with arguments it does not accept.
    #[error("usage error: {0}")]
    Usage(String),

    /// Numerical failure while training (non-finite loss or gradient).
    #[error("training error: {0}")]
    Training(String),

    /// Violated internal invariant.
    #[error("internal error: {0}")]
    Internal(String),

    /// The operation is not defined for this kind of environment.
    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub fn training(msg: impl Into<String>) -> Self {
        Error::Training(msg.into())
    }

    /// Process exit code: 1 for configuration problems, 2 for everything
    /// that goes wrong at run time.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
