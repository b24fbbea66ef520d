use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::overdispersion::DfMode;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum StudyDesign {
    /// Every unordered treatment pair gets this many two-arm studies.
    TwoArm { studies_per_comparison: usize },
    /// Every study evaluates all treatments.
    MultiArm { studies_total: usize },
}

/// One simulation scenario. Serialized as TOML:
///
/// ```toml
/// name = "scenario-1"
/// treatments = 5
/// arm_size = [30, 60]
/// tau = 0.0
/// cgr = [0.03, 0.05]
/// seed = 20210601
/// reps = 300
///
/// [design]
/// kind = "two-arm"
/// studies_per_comparison = 2
/// ```
///
/// `true_log_ors` (length `treatments − 1`) defaults to equal steps in (0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub name: String,
    pub treatments: usize,
    /// Inclusive range for the per-arm sample size.
    pub arm_size: (u64, u64),
    pub design: StudyDesign,
    #[serde(default)]
    pub tau: f64,
    /// Range of the reference-arm event risk.
    pub cgr: (f64, f64),
    #[serde(default)]
    pub true_log_ors: Option<Vec<f64>>,
    pub seed: u64,
    pub reps: usize,
    #[serde(default)]
    pub df_mode: DfMode,
    #[serde(default = "default_level")]
    pub level: f64,
}

fn default_level() -> f64 {
    0.95
}

impl ScenarioConfig {
    /// Row `index` (1-32) of the built-in scenario grid.
    pub fn preset(index: usize, seed: u64, reps: usize) -> Result<Self> {
        let (treatments, arm_size, design, tau, cgr) = match index {
            1..=16 => {
                let i = index - 1;
                let (t, size, per, cgr) = match i / 2 {
                    0 => (5, (30, 60), 2, (0.03, 0.05)),
                    1 => (5, (30, 60), 2, (0.05, 0.10)),
                    2 => (5, (30, 60), 4, (0.03, 0.05)),
                    3 => (5, (30, 60), 4, (0.05, 0.10)),
                    4 => (8, (30, 60), 2, (0.03, 0.05)),
                    5 => (5, (100, 200), 2, (0.01, 0.02)),
                    6 => (5, (100, 200), 2, (0.005, 0.01)),
                    _ => (5, (100, 200), 4, (0.005, 0.01)),
                };
                let tau = if i.is_multiple_of(2) { 0.0 } else { 0.1 };
                (
                    t,
                    size,
                    StudyDesign::TwoArm {
                        studies_per_comparison: per,
                    },
                    tau,
                    cgr,
                )
            }
            17..=32 => {
                let i = index - 17;
                let t = if i < 8 { 3 } else { 5 };
                let cgr = match (i % 8) / 2 {
                    0 => (0.01, 0.02),
                    1 => (0.005, 0.01),
                    2 => (0.005, 0.05),
                    _ => (0.005, 0.10),
                };
                let tau = if i.is_multiple_of(2) { 0.0 } else { 0.1 };
                (
                    t,
                    (100, 200),
                    StudyDesign::MultiArm { studies_total: 8 },
                    tau,
                    cgr,
                )
            }
            _ => return Err(Error::ConfigInvalid(format!("no scenario {index}"))),
        };
        let cfg = Self {
            name: format!("scenario-{index}"),
            treatments,
            arm_size,
            design,
            tau,
            cgr,
            true_log_ors: None,
            seed,
            reps,
            df_mode: DfMode::Paper,
            level: default_level(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::ConfigInvalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::ConfigInvalid(msg));
        if self.treatments < 2 {
            return fail(format!(
                "need at least 2 treatments, got {}",
                self.treatments
            ));
        }
        let (c1, c2) = self.arm_size;
        if c1 < 1 || c1 > c2 {
            return fail(format!("arm size range ({c1}, {c2}) invalid"));
        }
        let (u1, u2) = self.cgr;
        if !(u1 > 0.0 && u1 <= u2 && u2 < 1.0) {
            return fail(format!("control group risk range ({u1}, {u2}) invalid"));
        }
        if !(self.tau >= 0.0 && self.tau.is_finite()) {
            return fail(format!("tau {} invalid", self.tau));
        }
        if self.reps < 1 {
            return fail("reps must be at least 1".into());
        }
        if self.n_studies() < 1 {
            return fail("scenario generates no studies".into());
        }
        if let Some(ors) = &self.true_log_ors {
            if ors.len() != self.treatments - 1 || ors.iter().any(|x| !x.is_finite()) {
                return fail(format!(
                    "true_log_ors must hold {} finite values",
                    self.treatments - 1
                ));
            }
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return fail(format!("level {} not in (0, 1)", self.level));
        }
        if self.treatments > 999 {
            return fail("too many treatments".into());
        }
        Ok(())
    }

    /// True log odds ratios of treatments 2..T versus treatment 1.
    pub fn true_effects(&self) -> Vec<f64> {
        match &self.true_log_ors {
            Some(v) => v.clone(),
            None => {
                let steps = (self.treatments - 1) as f64;
                (1..self.treatments).map(|k| k as f64 / steps).collect()
            }
        }
    }

    pub fn n_studies(&self) -> usize {
        match self.design {
            StudyDesign::TwoArm {
                studies_per_comparison,
            } => studies_per_comparison * self.treatments * (self.treatments - 1) / 2,
            StudyDesign::MultiArm { studies_total } => studies_total,
        }
    }

    /// Treatment indices of each study, in generation order.
    pub fn study_arms(&self) -> Vec<Vec<usize>> {
        let t = self.treatments;
        match self.design {
            StudyDesign::TwoArm {
                studies_per_comparison,
            } => {
                let mut out = Vec::with_capacity(self.n_studies());
                for a in 0..t {
                    for b in a + 1..t {
                        for _ in 0..studies_per_comparison {
                            out.push(vec![a, b]);
                        }
                    }
                }
                out
            }
            StudyDesign::MultiArm { studies_total } => {
                (0..studies_total).map(|_| (0..t).collect()).collect()
            }
        }
    }
}
