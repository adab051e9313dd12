use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    /// Unreadable or inconsistent configuration.
    #[error("config error: {0}")]
    Config(String),

    /// A suite ran to completion and reported failures.
    #[error("suite failure: {0}")]
    Suite(String),

    #[error("internal error: {0}")]
    Internal(String),
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Suite(_) => 1,
            HarnessError::Config(_) => 2,
            HarnessError::Internal(_) => 3,
        }
    }
}

impl From<reslab_core::Error> for HarnessError {
    fn from(e: reslab_core::Error) -> Self {
        HarnessError::Internal(e.to_string())
    }
}

impl From<std::io::Error> for HarnessError {
    fn from(e: std::io::Error) -> Self {
        HarnessError::Internal(e.to_string())
    }
}

pub type HarnessResult<T> = std::result::Result<T, HarnessError>;
