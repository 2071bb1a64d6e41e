use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Caller handed in something with the wrong shape, range or index.
    #[error("rejected input: {0}")]
    InvalidInput(String),

    /// The operation has nothing to work on (empty buffer, empty set, ...).
    #[error("unavailable: {0}")]
    Unavailable(String),

    /// A loss, gradient or parameter left the finite reals.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// The external oracle sent something that does not follow the protocol.
    #[error("protocol error at query {ordinal}: {message} (payload: {excerpt:?})")]
    Protocol {
        ordinal: u64,
        message: String,
        excerpt: String,
    },

    /// The external oracle answered a request with an error line.
    #[error("oracle reported failure at query {ordinal}: {message}")]
    Remote { ordinal: u64, message: String },

    /// Pipe to the external oracle broke.
    #[error("transport failure at query {ordinal}: {source}")]
    Transport {
        ordinal: u64,
        #[source]
        source: std::io::Error,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed {what}: {message}")]
    Parse { what: String, message: String },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Parse { .. } => 2,
            Error::Protocol { .. } | Error::Remote { .. } | Error::Transport { .. } => 3,
            Error::NonFinite(_) => 4,
            Error::Io { .. } => 5,
            Error::InvalidInput(_) | Error::Unavailable(_) => 1,
        }
    }
}
