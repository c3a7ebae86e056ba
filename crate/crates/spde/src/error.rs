//! Error taxonomy shared by the solver and the experiment harness.

use thiserror::Error;

/// Library-wide error type.
///
/// The variants are deliberately coarse: callers (in particular the CLI)
/// map them onto process exit codes, so each variant corresponds to one
/// externally meaningful failure class.
#[derive(Debug, Error)]
pub enum SpdeError {
    /// A configuration value is inconsistent or out of range.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A simulated state stopped being finite (overflow or NaN).
    #[error("non-finite state: {0}")]
    NonFinite(String),

    /// An underlying I/O operation failed.
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),

    /// A serialized artifact (e.g. a noise dump) is malformed.
    #[error("malformed data: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, SpdeError>;

impl SpdeError {
    /// Short machine-readable label for the failure class.
    pub fn kind(&self) -> &'static str {
        match self {
            SpdeError::Config(_) => "config",
            SpdeError::NonFinite(_) => "non-finite",
            SpdeError::Io(_) => "io",
            SpdeError::Format(_) => "format",
        }
    }
}
