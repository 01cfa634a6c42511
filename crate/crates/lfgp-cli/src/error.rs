//! CLI error classification and exit codes.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, CliError>;

/// Errors bucketed by exit code: configuration problems exit 2, data
/// problems 3, numerical failures 4.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("numerical error: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }
}

impl From<lfgp_core::Error> for CliError {
    fn from(e: lfgp_core::Error) -> Self {
        use lfgp_core::Error as E;
        match &e {
            E::WindowTooLong { .. } | E::InvalidParameter(_) => CliError::Config(e.to_string()),
            E::BadLength { .. } | E::DimMismatch { .. } | E::MissingLabel { .. } => {
                CliError::Data(e.to_string())
            }
            E::AtWindow { source, .. } | E::AtIteration { source, .. } => {
                let inner: CliError = (**source).clone().into();
                match inner {
                    CliError::Config(_) => CliError::Config(e.to_string()),
                    CliError::Data(_) => CliError::Data(e.to_string()),
                    CliError::Numerical(_) => CliError::Numerical(e.to_string()),
                }
            }
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}
