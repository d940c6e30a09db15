use thiserror::Error;

/// Errors produced by the tensor, kernel, solver and IO layers.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied argument violates an operation's precondition.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// The request exceeds a configured work or size cap.
    #[error("capacity exceeded: {0}")]
    Capacity(String),

    /// A file or byte stream does not follow the expected layout.
    #[error("format error: {0}")]
    Format(String),

    /// Stored checksum does not match the payload.
    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    Checksum { stored: u32, computed: u32 },

    /// A model file written by an unknown format version.
    #[error("unsupported model version {0}")]
    Version(u32),

    #[error("configuration error: {0}")]
    Config(String),

    /// Numerical failure, e.g. the dual solver did not converge at the selected grid point.
    #[error("numerical error: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
