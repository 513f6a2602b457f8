use thiserror::Error;

/// Errors raised anywhere in the planning pipeline.
#[derive(Debug, Error)]
pub enum RasrError {
    /// A structure failed its invariants (probabilities, shapes, indices).
    #[error("validation error: {0}")]
    Validation(String),

    /// A numeric argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// An input file could not be parsed.
    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    /// The requested setting is not supported by this routine.
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// The enumeration oracle refused an instance that is too large.
    #[error("size guard exceeded: {0}")]
    SizeGuard(String),

    /// The tolerance demands more backups than the configured ceiling.
    #[error("horizon cap exceeded: tolerance needs {needed} backups, cap is {cap}")]
    HorizonCap { needed: u64, cap: u64 },

    #[error("internal error: {0}")]
    Internal(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl RasrError {
    /// Short stable identifier used by the CLI error record and the C ABI.
    pub fn kind(&self) -> &'static str {
        match self {
            RasrError::Validation(_) => "validation",
            RasrError::Domain(_) => "domain",
            RasrError::Parse { .. } => "parse",
            RasrError::Unsupported(_) => "unsupported",
            RasrError::SizeGuard(_) => "size_guard",
            RasrError::HorizonCap { .. } => "horizon_cap",
            RasrError::Internal(_) => "internal",
            RasrError::Io(_) => "io",
        }
    }

    /// Process exit status for this error. Usage errors from argument parsing exit with 2.
    pub fn exit_code(&self) -> i32 {
        match self {
            RasrError::Io(_) => 3,
            RasrError::Parse { .. } => 4,
            RasrError::Validation(_) => 5,
            RasrError::Domain(_) => 6,
            RasrError::Unsupported(_) => 7,
            RasrError::SizeGuard(_) => 8,
            RasrError::HorizonCap { .. } => 9,
            RasrError::Internal(_) => 70,
        }
    }
}

pub type Result<T> = std::result::Result<T, RasrError>;

pub(crate) fn validation(msg: impl Into<String>) -> RasrError {
    RasrError::Validation(msg.into())
}

pub(crate) fn domain(msg: impl Into<String>) -> RasrError {
    RasrError::Domain(msg.into())
}
