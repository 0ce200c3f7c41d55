use std::io;

use thiserror::Error;

/// Errors raised anywhere in the simulator.
///
/// The variants follow the failure classes the pipeline distinguishes:
/// bad configuration, bad caller input, numerical breakdown, and federation
/// protocol violations.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("input error: {0}")]
    Input(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("provenance error: {0}")]
    Provenance(String),

    #[error("checkpoint format error: {0}")]
    Format(String),

    #[error("io error: {0}")]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn protocol(msg: impl Into<String>) -> Self {
        Error::Protocol(msg.into())
    }

    /// Prefixes the message with `context`, keeping the variant.
    pub fn context(self, context: impl std::fmt::Display) -> Self {
        match self {
            Error::Config(m) => Error::Config(format!("{context}: {m}")),
            Error::Input(m) => Error::Input(format!("{context}: {m}")),
            Error::Numeric(m) => Error::Numeric(format!("{context}: {m}")),
            Error::Protocol(m) => Error::Protocol(format!("{context}: {m}")),
            Error::Provenance(m) => Error::Provenance(format!("{context}: {m}")),
            Error::Format(m) => Error::Format(format!("{context}: {m}")),
            Error::Io(e) => Error::Io(std::io::Error::new(e.kind(), format!("{context}: {e}"))),
        }
    }
}
