//! Penalized-likelihood network meta-analysis of binary outcomes.
//!
//! A one-stage logistic model with study-specific intercepts and common
//! treatment effects is fitted with Firth's bias-reducing penalty, which
//! keeps estimates finite when studies have zero events.

pub mod design;
pub mod error;
pub mod inference;
pub mod ivcomparator;
pub mod netdata;
pub mod overdispersion;
pub mod plfit;
pub mod simulation;

pub use design::DesignMatrix;
pub use error::{Error, ErrorCategory, Result};
pub use inference::{
    league_table, profile_ci, profile_contrast, wald_ci, wald_table, CiKind, Contrast, ContrastRow,
    ContrastTable, Interval, ProfileInterval, TreatmentEffects,
};
pub use ivcomparator::{iv_nma, IvFit, Tau2Estimate};
pub use netdata::{Arm, ArmRecord, Network, Study};
pub use overdispersion::{fletcher_phi, DfMode, Inflate, PhiEstimate};
pub use plfit::{fit, fit_with_design, FitOptions, FitResult};
