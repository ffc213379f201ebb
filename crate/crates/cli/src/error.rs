use thiserror::Error;

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] patchreg::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("worker pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub(crate) fn invalid(e: patchreg::Error) -> Self {
        CliError::Config(e.to_string())
    }
}

/// Process exit status.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Success,
    /// Some samples failed; their failures are recorded in the results.
    PartialFailure,
    /// Configuration, I/O or other fatal error.
    Fatal,
}

impl Outcome {
    pub fn code(self) -> u8 {
        match self {
            Outcome::Success => 0,
            Outcome::PartialFailure => 1,
            Outcome::Fatal => 2,
        }
    }

    pub fn from_failures(failures: usize) -> Self {
        if failures == 0 {
            Outcome::Success
        } else {
            Outcome::PartialFailure
        }
    }
}
