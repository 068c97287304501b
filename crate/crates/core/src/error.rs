use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Caller supplied data that violates an operation's precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A dense factorization failed or produced non-finite values.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// The minimal-penalty path has no usable dimensionality jump.
    #[error("no jump detected: {0}")]
    NoJump(String),

    /// The df window `[n^{3/4}, n/10]` is empty or never hit by the path.
    #[error("df window rule not applicable: {0}")]
    Window(String),

    #[error("operation not supported for this family: {0}")]
    Unsupported(String),

    #[error("csv error at line {line}: {message}")]
    Csv { line: u64, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
