use thiserror::Error;

/// Failures that stop a command before it produces a result.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad arguments or input files. Exit code 2.
    #[error("{0}")]
    Usage(String),
    /// I/O trouble while writing results. Exit code 1.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }
}

impl From<vqvi_core::Error> for CliError {
    fn from(e: vqvi_core::Error) -> Self {
        match e {
            vqvi_core::Error::Io(e) => CliError::Runtime(e.to_string()),
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
