use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse error grouping used for exit statuses and machine-readable reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Parse,
    Validation,
    Disconnection,
    Convergence,
    Config,
}

impl ErrorCategory {
    pub fn as_str(&self) -> &'static str {
        match self {
            ErrorCategory::Parse => "parse",
            ErrorCategory::Validation => "validation",
            ErrorCategory::Disconnection => "disconnection",
            ErrorCategory::Convergence => "convergence",
            ErrorCategory::Config => "config",
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("no arm records supplied")]
    EmptyInput,
    #[error("study {study} lists treatment {treatment} more than once")]
    DuplicateArm { study: String, treatment: String },
    #[error("study {study} has a single arm")]
    SingleArmStudy { study: String },
    #[error("study {study}, treatment {treatment}: events={events} outside [0, n={sample_size}] or n < 1")]
    CountOutOfRange {
        study: String,
        treatment: String,
        events: u64,
        sample_size: u64,
    },
    #[error("reference treatment {0} does not occur in the network")]
    UnknownReference(String),
    #[error("unknown treatment {0}")]
    UnknownTreatment(String),
    #[error("network is disconnected ({components} components)")]
    DisconnectedNetwork { components: usize },
    #[error("network is disconnected after excluding studies ({components} components)")]
    DisconnectedAfterExclusion { components: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("information matrix is not positive definite")]
    SingularInformation,
    #[error("unbounded estimate detected (|theta| > {threshold}); data are separated")]
    SeparationDetected { threshold: f64 },
    #[error("fit did not converge")]
    NotConvergedFit,
    #[error("profile deviance does not reach the critical value within [{low}, {high}]")]
    BracketFailure { low: f64, high: f64 },
    #[error("constrained fit failed during profiling: {0}")]
    InnerFitFailure(String),
    #[error("fitted variance is zero for arm {arm}")]
    DegenerateFit { arm: usize },
    #[error("no residual degrees of freedom")]
    NoResidualDf,
    #[error("phi must be finite and >= 1, got {0}")]
    PhiOutOfRange(f64),
    #[error("at least {needed} studies required, got {got}")]
    InsufficientStudies { needed: usize, got: usize },
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("parameter index {index} out of range for {len} parameters")]
    ParameterIndex { index: usize, len: usize },
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        use Error::*;
        match self {
            EmptyInput
            | DuplicateArm { .. }
            | SingleArmStudy { .. }
            | CountOutOfRange { .. }
            | UnknownReference(_)
            | UnknownTreatment(_)
            | DimensionMismatch { .. }
            | ParameterIndex { .. }
            | PhiOutOfRange(_)
            | InsufficientStudies { .. } => ErrorCategory::Validation,
            DisconnectedNetwork { .. } | DisconnectedAfterExclusion { .. } => {
                ErrorCategory::Disconnection
            }
            SingularInformation
            | SeparationDetected { .. }
            | NotConvergedFit
            | BracketFailure { .. }
            | InnerFitFailure(_)
            | DegenerateFit { .. }
            | NoResidualDf => ErrorCategory::Convergence,
            ConfigInvalid(_) => ErrorCategory::Config,
        }
    }
}
