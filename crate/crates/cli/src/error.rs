use std::fmt;

use plnma::ErrorCategory;

/// An error with the category reported on stderr and through the exit status.
#[derive(Debug)]
pub struct CliError {
    pub category: ErrorCategory,
    pub message: String,
}

impl CliError {
    pub fn new(category: ErrorCategory, message: impl Into<String>) -> Self {
        Self {
            category,
            message: message.into(),
        }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self::new(ErrorCategory::Config, message)
    }

    pub fn exit_code(&self) -> i32 {
        match self.category {
            ErrorCategory::Parse => 3,
            ErrorCategory::Validation => 4,
            ErrorCategory::Disconnection => 5,
            ErrorCategory::Convergence => 6,
            ErrorCategory::Config => 7,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "error[{}]: {}", self.category.as_str(), self.message)
    }
}

impl From<plnma::Error> for CliError {
    fn from(e: plnma::Error) -> Self {
        Self::new(e.category(), e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
