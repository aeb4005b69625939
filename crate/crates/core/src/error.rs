use std::io;

/// Errors shared across the platform.
///
/// The variants map one-to-one onto the error classes used by the HTTP API,
/// see `specmon-server`.
#[derive(thiserror::Error, Debug)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("permission denied: {0}")]
    PermissionDenied(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("no such view: {0}")]
    NoSuchView(String),
    #[error("unavailable: {0}")]
    Unavailable(String),
    #[error("offset {offset} is out of retention (log starts at {log_start})")]
    OutOfRetention { offset: u64, log_start: u64 },
    #[error("checksum mismatch at byte {0}")]
    Checksum(u64),
    #[error("invalid state transition: {0}")]
    InvalidState(String),
    /// Storage failures are retriable from the producer's point of view.
    #[error("storage: {0}")]
    Storage(#[from] io::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn parse(msg: impl std::fmt::Display) -> Self {
        Error::Parse(msg.to_string())
    }

    /// Whether a producer may retry the failed operation.
    pub fn is_retriable(&self) -> bool {
        matches!(self, Error::Storage(_) | Error::Unavailable(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
