use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ScenarioConfig;
use super::generate::{generate_dataset, treatment_label};
use crate::design::DesignMatrix;
use crate::error::{Error, Result};
use crate::inference::{profile_ci, wald_interval, Interval};
use crate::ivcomparator::iv_nma;
use crate::netdata::Network;
use crate::overdispersion::fletcher_phi;
use crate::plfit::{fit_with_design, FitOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    PlWald,
    PlProfile,
    PlPhi,
    Mle,
    IvCommon,
    IvRandom,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::PlWald,
        Method::PlProfile,
        Method::PlPhi,
        Method::Mle,
        Method::IvCommon,
        Method::IvRandom,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::PlWald => "pl-wald",
            Method::PlProfile => "pl-profile",
            Method::PlPhi => "pl-phi",
            Method::Mle => "mle",
            Method::IvCommon => "iv-common",
            Method::IvRandom => "iv-random",
        }
    }

    fn uses_pl(&self) -> bool {
        matches!(self, Method::PlWald | Method::PlProfile | Method::PlPhi)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::ConfigInvalid(format!("unknown method {s}")))
    }
}

/// Estimates and intervals for the `T − 1` basic contrasts, or the failure.
type MethodOutcome = std::result::Result<Vec<(f64, Interval)>, String>;

/// Per-method outcomes of the shared penalized fit, plus `(phi, denominator_nonpositive)`.
type PlOutcomes = (Vec<(Method, MethodOutcome)>, Option<(f64, bool)>);

#[derive(Debug, Clone)]
struct RepOutcome {
    all_zero_studies: usize,
    mean_events_per_study: f64,
    phi: Option<(f64, bool)>,
    methods: Vec<MethodOutcome>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mean_bias: f64,
    pub coverage: f64,
    pub mse: f64,
    pub mean_ci_length: f64,
    pub mc_se_bias: f64,
}

/// Performance measures from paired samples of errors and interval results.
///
/// `mc_se_bias` is the sample standard deviation of `mc_units` over √len.
pub fn summarize(
    errors: &[f64],
    covered: &[bool],
    lengths: &[f64],
    mc_units: &[f64],
) -> Option<Metrics> {
    if errors.is_empty() {
        return None;
    }
    let n = errors.len() as f64;
    let mean_bias = errors.iter().sum::<f64>() / n;
    let mse = errors.iter().map(|e| e * e).sum::<f64>() / n;
    let coverage = covered.iter().filter(|&&c| c).count() as f64 / covered.len() as f64;
    let mean_ci_length = lengths.iter().sum::<f64>() / lengths.len() as f64;
    let k = mc_units.len() as f64;
    let mc_se_bias = if mc_units.len() > 1 {
        let m = mc_units.iter().sum::<f64>() / k;
        let var = mc_units.iter().map(|u| (u - m).powi(2)).sum::<f64>() / (k - 1.0);
        (var / k).sqrt()
    } else {
        f64::NAN
    };
    Some(Metrics {
        mean_bias,
        coverage,
        mse,
        mean_ci_length,
        mc_se_bias,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimandSummary {
    pub estimand: String,
    pub truth: f64,
    pub metrics: Option<Metrics>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhiSummary {
    pub reps_with_phi_above_one: usize,
    pub fraction_phi_above_one: f64,
    pub reps_with_nonpositive_denominator: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub successes: usize,
    pub convergence_failures: usize,
    pub aggregate: Option<Metrics>,
    pub per_estimand: Vec<EstimandSummary>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub phi: Option<PhiSummary>,
    /// First few failure messages, for diagnostics.
    pub failure_examples: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantileSummary {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

/// Linear-interpolation quantiles (the common "type 7" definition).
pub fn quantile_summary(values: &[f64]) -> Option<QuantileSummary> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let q = |p: f64| {
        let h = (v.len() - 1) as f64 * p;
        let lo = h.floor() as usize;
        let hi = h.ceil() as usize;
        v[lo] + (h - lo as f64) * (v[hi] - v[lo])
    };
    Some(QuantileSummary {
        min: v[0],
        q1: q(0.25),
        median: q(0.5),
        q3: q(0.75),
        max: v[v.len() - 1],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub scenario: ScenarioConfig,
    pub methods: Vec<MethodSummary>,
    pub all_zero_study_counts: Vec<usize>,
    pub zero_study_profile: QuantileSummary,
    pub mean_events_per_study: f64,
}

impl SimReport {
    pub fn method(&self, m: Method) -> Option<&MethodSummary> {
        self.methods.iter().find(|s| s.method == m)
    }
}

fn pl_outcomes(net: &Network, methods: &[Method], cfg: &ScenarioConfig) -> PlOutcomes {
    let mut out = Vec::new();
    let mut phi_info = None;
    let pl: Vec<Method> = methods.iter().copied().filter(Method::uses_pl).collect();
    if pl.is_empty() {
        return (out, phi_info);
    }
    let fitted = DesignMatrix::build(net).and_then(|dm| {
        let f = fit_with_design(net, &dm, &FitOptions::penalized())?;
        Ok((dm, f))
    });
    let (dm, fit) = match fitted {
        Ok((dm, f)) if f.converged => (dm, f),
        Ok(_) => {
            for m in pl {
                out.push((m, Err("penalized fit did not converge".to_string())));
            }
            return (out, phi_info);
        }
        Err(e) => {
            for m in pl {
                out.push((m, Err(e.to_string())));
            }
            return (out, phi_info);
        }
    };
    let params: Vec<usize> = (1..cfg.treatments)
        .map(|k| dm.treatment_column(k).expect("non-reference treatment"))
        .collect();

    for m in pl {
        let res: MethodOutcome = match m {
            Method::PlWald => params
                .iter()
                .map(|&j| {
                    wald_interval(fit.theta_hat[j], fit.se(j), cfg.level)
                        .map(|ci| (fit.theta_hat[j], ci))
                        .map_err(|e| e.to_string())
                })
                .collect(),
            Method::PlProfile => params
                .iter()
                .map(|&j| {
                    profile_ci(net, &dm, &fit, j, cfg.level)
                        .map(|p| (fit.theta_hat[j], p.interval))
                        .map_err(|e| e.to_string())
                })
                .collect(),
            Method::PlPhi => match fletcher_phi(&fit, net, cfg.df_mode) {
                Ok(est) => {
                    phi_info = Some((est.phi, est.denominator_nonpositive));
                    let k = est.phi.sqrt();
                    params
                        .iter()
                        .map(|&j| {
                            wald_interval(fit.theta_hat[j], fit.se(j) * k, cfg.level)
                                .map(|ci| (fit.theta_hat[j], ci))
                                .map_err(|e| e.to_string())
                        })
                        .collect()
                }
                Err(e) => Err(e.to_string()),
            },
            _ => unreachable!(),
        };
        out.push((m, res));
    }
    (out, phi_info)
}

fn effects_outcome(
    d: &[f64],
    se: impl Fn(usize) -> f64,
    treatments: usize,
    level: f64,
) -> MethodOutcome {
    (1..treatments)
        .map(|k| {
            wald_interval(d[k], se(k), level)
                .map(|ci| (d[k], ci))
                .map_err(|e| e.to_string())
        })
        .collect()
}

fn run_rep(cfg: &ScenarioConfig, methods: &[Method], rep: u64) -> Result<RepOutcome> {
    let net = generate_dataset(cfg, rep)?;
    let total_events: u64 = net.arms().map(|(_, a)| a.events).sum();
    let (pl, phi) = pl_outcomes(&net, methods, cfg);

    let outcomes = methods
        .iter()
        .map(|&m| match m {
            Method::PlWald | Method::PlProfile | Method::PlPhi => pl
                .iter()
                .find(|(pm, _)| *pm == m)
                .map(|(_, o)| o.clone())
                .expect("pl outcome computed"),
            Method::Mle => match crate::plfit::fit(&net, &FitOptions::unpenalized()) {
                Ok(f) if f.converged => {
                    let eff = f.effects();
                    let cov = eff.cov().clone();
                    effects_outcome(eff.d(), |k| cov[(k, k)].sqrt(), cfg.treatments, cfg.level)
                }
                Ok(_) => Err("unpenalized fit did not converge".into()),
                Err(e) => Err(e.to_string()),
            },
            Method::IvCommon | Method::IvRandom => match iv_nma(&net, m == Method::IvRandom) {
                Ok((fit, _, _)) => {
                    let eff = fit.effects();
                    effects_outcome(
                        eff.d(),
                        |k| eff.cov()[(k, k)].sqrt(),
                        cfg.treatments,
                        cfg.level,
                    )
                }
                Err(e) => Err(e.to_string()),
            },
        })
        .collect();

    Ok(RepOutcome {
        all_zero_studies: net.count_all_zero_studies(),
        mean_events_per_study: total_events as f64 / net.n_studies() as f64,
        phi,
        methods: outcomes,
    })
}

/// Generate `cfg.reps` datasets, fit every requested method, and aggregate.
///
/// Replications run in parallel; results are aggregated in replication order.
pub fn run_scenario(cfg: &ScenarioConfig, methods: &[Method]) -> Result<SimReport> {
    cfg.validate()?;
    if methods.is_empty() {
        return Err(Error::ConfigInvalid("no methods requested".into()));
    }
    let mut methods = methods.to_vec();
    methods.sort();
    methods.dedup();

    let reps: Vec<RepOutcome> = (0..cfg.reps as u64)
        .into_par_iter()
        .map(|rep| run_rep(cfg, &methods, rep))
        .collect::<Result<_>>()?;

    let truth = cfg.true_effects();
    let labels: Vec<String> = (1..cfg.treatments)
        .map(|k| format!("{}:{}", treatment_label(cfg, k), treatment_label(cfg, 0)))
        .collect();

    let summaries = methods
        .iter()
        .enumerate()
        .map(|(mi, &method)| {
            let ok: Vec<&Vec<(f64, Interval)>> = reps
                .iter()
                .filter_map(|r| r.methods[mi].as_ref().ok())
                .collect();
            let failure_examples: Vec<String> = reps
                .iter()
                .filter_map(|r| r.methods[mi].as_ref().err().cloned())
                .take(5)
                .collect();
            let failures = reps.len() - ok.len();

            let mut all_err = Vec::new();
            let mut all_cov = Vec::new();
            let mut all_len = Vec::new();
            let mut per_rep_bias = Vec::new();
            for est in &ok {
                let errs: Vec<f64> = est.iter().zip(&truth).map(|((e, _), t)| e - t).collect();
                per_rep_bias.push(errs.iter().sum::<f64>() / errs.len() as f64);
                for ((e, ci), t) in est.iter().zip(&truth) {
                    all_err.push(e - t);
                    all_cov.push(ci.covers(*t));
                    all_len.push(ci.length());
                }
            }
            let per_estimand = truth
                .iter()
                .enumerate()
                .map(|(k, &t)| {
                    let errs: Vec<f64> = ok.iter().map(|est| est[k].0 - t).collect();
                    let cov: Vec<bool> = ok.iter().map(|est| est[k].1.covers(t)).collect();
                    let len: Vec<f64> = ok.iter().map(|est| est[k].1.length()).collect();
                    EstimandSummary {
                        estimand: labels[k].clone(),
                        truth: t,
                        metrics: summarize(&errs, &cov, &len, &errs),
                    }
                })
                .collect();

            let phi = (method == Method::PlPhi).then(|| {
                let vals: Vec<(f64, bool)> = reps.iter().filter_map(|r| r.phi).collect();
                let above = vals.iter().filter(|(p, _)| *p > 1.0).count();
                PhiSummary {
                    reps_with_phi_above_one: above,
                    fraction_phi_above_one: if vals.is_empty() {
                        0.0
                    } else {
                        above as f64 / vals.len() as f64
                    },
                    reps_with_nonpositive_denominator: vals.iter().filter(|(_, d)| *d).count(),
                }
            });

            MethodSummary {
                method,
                successes: ok.len(),
                convergence_failures: failures,
                aggregate: summarize(&all_err, &all_cov, &all_len, &per_rep_bias),
                per_estimand,
                phi,
                failure_examples,
            }
        })
        .collect();

    let counts: Vec<usize> = reps.iter().map(|r| r.all_zero_studies).collect();
    let as_f64: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    let mean_events = reps.iter().map(|r| r.mean_events_per_study).sum::<f64>() / reps.len() as f64;
    Ok(SimReport {
        scenario: cfg.clone(),
        methods: summaries,
        zero_study_profile: quantile_summary(&as_f64).expect("reps >= 1"),
        all_zero_study_counts: counts,
        mean_events_per_study: mean_events,
    })
}

/// Distribution of the per-replication number of all-zero-event studies.
pub fn zero_study_profile(
    cfg: &ScenarioConfig,
    reps: usize,
) -> Result<(QuantileSummary, Vec<usize>)> {
    cfg.validate()?;
    if reps < 1 {
        return Err(Error::ConfigInvalid("reps must be at least 1".into()));
    }
    let counts: Vec<usize> = (0..reps as u64)
        .into_par_iter()
        .map(|rep| generate_dataset(cfg, rep).map(|n| n.count_all_zero_studies()))
        .collect::<Result<_>>()?;
    let values: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    Ok((quantile_summary(&values).expect("reps >= 1"), counts))
}
