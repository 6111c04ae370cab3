//! CLI-level errors and their mapping onto process exit codes.
//!
//! The contract is small and fixed: flag/usage problems exit with 1, data or
//! model errors surfaced by the core library exit with 2, and numerical
//! failures (non-finite values reported by the core) exit with 3. Successful
//! runs, `--help`, and `--version` exit with 0.

use std::fmt;

/// Anything that can abort a CLI run.
#[derive(Debug)]
pub enum CliError {
    /// The invocation itself is wrong: a required value is missing or two
    /// flags contradict each other. Exit code 1.
    Usage(String),
    /// The core library rejected the inputs or the computation failed.
    /// Exit code 2, or 3 when the failure is numerical.
    Core(latent_response::Error),
}

impl CliError {
    /// Builds a usage error from anything printable.
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    /// The process exit code this error maps to.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Core(latent_response::Error::NonFinite(_)) => 3,
            CliError::Core(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "{msg}"),
            CliError::Core(err) => write!(f, "{err}"),
        }
    }
}

impl From<latent_response::Error> for CliError {
    fn from(err: latent_response::Error) -> Self {
        CliError::Core(err)
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        CliError::Core(latent_response::Error::from(err))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(err: serde_json::Error) -> Self {
        CliError::Core(latent_response::Error::from(err))
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
