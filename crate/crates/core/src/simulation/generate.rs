use rand::Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};

use super::config::ScenarioConfig;
use super::rng::substream;
use crate::error::{Error, Result};
use crate::netdata::{ArmRecord, Network};

/// A generated network together with the parameters that produced it.
#[derive(Debug, Clone)]
pub struct GeneratedDataset {
    pub network: Network,
    /// Per study, per arm: the true log odds ratio versus treatment 1 used for that arm.
    pub arm_log_ors: Vec<Vec<f64>>,
    /// Per study, per arm: event probability.
    pub arm_probabilities: Vec<Vec<f64>>,
    /// Per study: reference-treatment risk.
    pub control_risks: Vec<f64>,
}

pub fn treatment_label(cfg: &ScenarioConfig, k: usize) -> String {
    let width = cfg.treatments.to_string().len();
    format!("T{:0width$}", k + 1)
}

fn study_label(n_studies: usize, i: usize) -> String {
    let width = n_studies.to_string().len().max(3);
    format!("S{:0width$}", i + 1)
}

pub fn generate_dataset(cfg: &ScenarioConfig, rep: u64) -> Result<Network> {
    Ok(generate_detailed(cfg, rep)?.network)
}

pub fn generate_detailed(cfg: &ScenarioConfig, rep: u64) -> Result<GeneratedDataset> {
    cfg.validate()?;
    let truth = cfg.true_effects();
    let (c1, c2) = cfg.arm_size;
    let (u1, u2) = cfg.cgr;
    let designs = cfg.study_arms();

    let mut records = Vec::new();
    let mut arm_log_ors = Vec::with_capacity(designs.len());
    let mut arm_probabilities = Vec::with_capacity(designs.len());
    let mut control_risks = Vec::with_capacity(designs.len());

    for (i, arms) in designs.iter().enumerate() {
        let mut study_rng = substream(cfg.seed, rep, i, 0);
        let n: u64 = study_rng.random_range(c1..=c2);
        let p_ref = u1 + (u2 - u1) * study_rng.random::<f64>();
        let odds_ref = p_ref / (1.0 - p_ref);
        control_risks.push(p_ref);

        let label = study_label(designs.len(), i);
        let mut lors = Vec::with_capacity(arms.len());
        let mut probs = Vec::with_capacity(arms.len());
        for (slot, &k) in arms.iter().enumerate() {
            let mut rng = substream(cfg.seed, rep, i, slot + 1);
            let lor = if k == 0 {
                0.0
            } else if cfg.tau > 0.0 {
                let z: f64 = StandardNormal.sample(&mut rng);
                truth[k - 1] + cfg.tau * z
            } else {
                truth[k - 1]
            };
            let p = if k == 0 {
                p_ref
            } else {
                let odds = odds_ref * lor.exp();
                odds / (1.0 + odds)
            };
            assert!(p > 0.0 && p < 1.0, "event probability {p} outside (0, 1)");
            let events = Binomial::new(n, p)
                .map_err(|e| Error::ConfigInvalid(e.to_string()))?
                .sample(&mut rng);
            records.push(ArmRecord::new(
                label.clone(),
                treatment_label(cfg, k),
                events,
                n,
            ));
            lors.push(lor);
            probs.push(p);
        }
        arm_log_ors.push(lors);
        arm_probabilities.push(probs);
    }

    let network = Network::validate(&records, Some(&treatment_label(cfg, 0)))?;
    Ok(GeneratedDataset {
        network,
        arm_log_ors,
        arm_probabilities,
        control_risks,
    })
}
