use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Request exceeds a hard size cap (qubits, distance, blocks).
    #[error("capacity exceeded: {0}")]
    Capacity(String),
    /// Arguments that violate an operation's preconditions.
    #[error("invalid input: {0}")]
    Invalid(String),
    /// Config document failed validation.
    #[error("config error: {0}")]
    Config(String),
    /// Peer sent something the state machine does not accept.
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
    pub fn capacity(msg: impl Into<String>) -> Self {
        Error::Capacity(msg.into())
    }
}
