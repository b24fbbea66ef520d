//! Monte Carlo harness: scenario definitions, data generation and method evaluation.

mod config;
mod generate;
mod rng;
mod run;

pub use config::{ScenarioConfig, StudyDesign};
pub use generate::{generate_dataset, generate_detailed, treatment_label, GeneratedDataset};
pub use rng::substream;
pub use run::{
    quantile_summary, run_scenario, summarize, zero_study_profile, EstimandSummary, Method,
    MethodSummary, Metrics, PhiSummary, QuantileSummary, SimReport,
};
