use oss_core::SimError;
use thiserror::Error;

/// Failures grouped by exit code.
///
/// | code | meaning |
/// |------|---------|
/// | 0 | success |
/// | 2 | configuration error (bad JSON, unknown key, invalid value) |
/// | 3 | numerical failure inside a simulation or fit |
/// | 4 | I/O error or failed output verification |
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Numeric(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Io(_) => 4,
        }
    }

    pub fn io(context: impl std::fmt::Display, e: std::io::Error) -> Self {
        CliError::Io(format!("{context}: {e}"))
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::InvalidInput { .. } => CliError::Config(e.to_string()),
            e => CliError::Numeric(e.to_string()),
        }
    }
}
