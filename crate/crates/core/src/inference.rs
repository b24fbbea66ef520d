//! Pairwise contrasts, Wald and profile-likelihood intervals, league tables.
//!
//! Contrast `(t1, t2)` is the log odds ratio of `t2` versus `t1`, obtained
//! from the basic parameters by consistency: `d_{t1,t2} = d_{ref,t2} − d_{ref,t1}`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::design::DesignMatrix;
use crate::error::{Error, Result};
use crate::netdata::Network;
use crate::plfit::{self, FitResult};

/// Two-sided standard normal quantile `z_{1−q/2}` for confidence `level = 1 − q`.
pub fn normal_quantile(level: f64) -> Result<f64> {
    check_level(level)?;
    let normal = Normal::standard();
    Ok(normal.inverse_cdf(0.5 + 0.5 * level))
}

/// `(level)` quantile of χ² with one degree of freedom, via `z_{(1+level)/2}²`.
pub fn chi2_1_quantile(level: f64) -> Result<f64> {
    Ok(normal_quantile(level)?.powi(2))
}

fn check_level(level: f64) -> Result<()> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(Error::ConfigInvalid(format!(
            "confidence level {level} not in (0, 1)"
        )))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub low: f64,
    pub high: f64,
}

impl Interval {
    /// Closed-interval coverage.
    pub fn covers(&self, x: f64) -> bool {
        self.low <= x && x <= self.high
    }

    pub fn length(&self) -> f64 {
        self.high - self.low
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CiKind {
    Wald,
    Profile,
}

impl CiKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            CiKind::Wald => "wald",
            CiKind::Profile => "profile",
        }
    }
}

/// Basic parameters `d_{ref,t}` for every treatment (zero at the reference)
/// with their covariance embedded in a `T × T` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct TreatmentEffects {
    treatments: Vec<String>,
    reference: usize,
    d: Vec<f64>,
    cov: DMatrix<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Contrast {
    pub estimate: f64,
    pub se: f64,
}

impl TreatmentEffects {
    pub fn new(treatments: Vec<String>, reference: usize, d: Vec<f64>, cov: DMatrix<f64>) -> Self {
        Self {
            treatments,
            reference,
            d,
            cov,
        }
    }

    pub fn treatments(&self) -> &[String] {
        &self.treatments
    }

    pub fn reference(&self) -> usize {
        self.reference
    }

    pub fn d(&self) -> &[f64] {
        &self.d
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn index(&self, label: &str) -> Result<usize> {
        self.treatments
            .iter()
            .position(|t| t == label)
            .ok_or_else(|| Error::UnknownTreatment(label.to_string()))
    }

    pub fn contrast(&self, t1: &str, t2: &str) -> Result<Contrast> {
        let (a, b) = (self.index(t1)?, self.index(t2)?);
        Ok(self.contrast_idx(a, b))
    }

    pub fn contrast_idx(&self, a: usize, b: usize) -> Contrast {
        if a == b {
            return Contrast {
                estimate: 0.0,
                se: 0.0,
            };
        }
        let estimate = self.d[b] - self.d[a];
        let var = self.cov[(a, a)] + self.cov[(b, b)] - 2.0 * self.cov[(a, b)];
        Contrast {
            estimate,
            se: var.max(0.0).sqrt(),
        }
    }

    /// Covariance scaled by `factor`; point estimates untouched.
    pub fn scale_covariance(&self, factor: f64) -> Self {
        Self {
            cov: &self.cov * factor,
            ..self.clone()
        }
    }

    /// Treatment indices with the reference first, then label order.
    pub fn display_order(&self) -> Vec<usize> {
        std::iter::once(self.reference)
            .chain((0..self.treatments.len()).filter(|&k| k != self.reference))
            .collect()
    }
}

/// `θ̂_j ± z·se_j`.
pub fn wald_ci(fit: &FitResult, param: usize, level: f64) -> Result<Interval> {
    if !fit.converged {
        return Err(Error::NotConvergedFit);
    }
    if param >= fit.theta_hat.len() {
        return Err(Error::ParameterIndex {
            index: param,
            len: fit.theta_hat.len(),
        });
    }
    wald_interval(fit.theta_hat[param], fit.se(param), level)
}

pub fn wald_interval(estimate: f64, se: f64, level: f64) -> Result<Interval> {
    let z = normal_quantile(level)?;
    Ok(Interval {
        low: estimate - z * se,
        high: estimate + z * se,
    })
}

/// Estimate and SE of `t2` versus `t1`.
pub fn contrast(fit: &FitResult, t1: &str, t2: &str) -> Result<Contrast> {
    fit.effects().contrast(t1, t2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileInterval {
    pub interval: Interval,
    /// Profile deviance `2(l*_max − l*_profile)` at each returned endpoint.
    pub deviance_low: f64,
    pub deviance_high: f64,
    pub critical: f64,
}

const PROFILE_TOL: f64 = 1e-4;
const BRACKET_SE_MULTIPLE: f64 = 10.0;
const BRACKET_DOUBLINGS: usize = 4;

struct Profiler<'a> {
    net: &'a Network,
    dm: &'a DesignMatrix,
    fit: &'a FitResult,
    param: usize,
    lmax: f64,
}

impl Profiler<'_> {
    /// Deviance at `x` plus the constrained optimum for warm starts.
    fn deviance(&self, x: f64, warm: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        let mut start = warm.clone();
        start[self.param] = x;
        let out = plfit::fisher_scoring(
            self.net,
            self.dm,
            &self.fit.options,
            start,
            Some(self.param),
        )
        .map_err(|e| Error::InnerFitFailure(e.to_string()))?;
        if !out.converged {
            return Err(Error::InnerFitFailure(format!(
                "constrained fit at {x} did not converge after {} iterations",
                out.iterations
            )));
        }
        Ok((2.0 * (self.lmax - out.objective), out.theta))
    }

    /// Root of `deviance(x) = crit` on one side of the estimate (`side` = ±1).
    fn endpoint(&self, side: f64, crit: f64) -> Result<(f64, f64)> {
        let center = self.fit.theta_hat[self.param];
        let se = self.fit.se(self.param);
        let mut dist = BRACKET_SE_MULTIPLE * se;

        let mut inner = (center, 0.0, self.fit.theta_hat.clone());
        let mut outer = None;
        for _ in 0..=BRACKET_DOUBLINGS {
            let x = center + side * dist;
            let (dev, theta) = self.deviance(x, &inner.2)?;
            if dev >= crit {
                outer = Some((x, dev));
                break;
            }
            inner = (x, dev, theta);
            dist *= 2.0;
        }
        let Some(mut outer) = outer else {
            let far = center + side * dist / 2.0;
            return Err(Error::BracketFailure {
                low: center.min(far),
                high: center.max(far),
            });
        };

        while (outer.0 - inner.0).abs() > PROFILE_TOL {
            let mid = 0.5 * (inner.0 + outer.0);
            let (dev, theta) = self.deviance(mid, &inner.2)?;
            if dev < crit {
                inner = (mid, dev, theta);
            } else {
                outer = (mid, dev);
            }
        }
        let frac = ((crit - inner.1) / (outer.1 - inner.1)).clamp(0.0, 1.0);
        let root = inner.0 + frac * (outer.0 - inner.0);
        let (dev, _) = self.deviance(root, &inner.2)?;
        Ok((root, dev))
    }
}

/// Profile-likelihood interval for parameter `param` of a converged fit.
pub fn profile_ci(
    net: &Network,
    dm: &DesignMatrix,
    fit: &FitResult,
    param: usize,
    level: f64,
) -> Result<ProfileInterval> {
    if !fit.converged {
        return Err(Error::NotConvergedFit);
    }
    if param >= fit.theta_hat.len() {
        return Err(Error::ParameterIndex {
            index: param,
            len: fit.theta_hat.len(),
        });
    }
    let crit = chi2_1_quantile(level)?;
    let profiler = Profiler {
        net,
        dm,
        fit,
        param,
        lmax: fit.penalized_loglik,
    };
    let (low, deviance_low) = profiler.endpoint(-1.0, crit)?;
    let (high, deviance_high) = profiler.endpoint(1.0, crit)?;
    Ok(ProfileInterval {
        interval: Interval { low, high },
        deviance_low,
        deviance_high,
        critical: crit,
    })
}

/// Profile interval for the contrast of `t2` versus `t1`, refitting with `t1`
/// as reference when it is not already the reference.
pub fn profile_contrast(
    net: &Network,
    fit: &FitResult,
    t1: &str,
    t2: &str,
    level: f64,
) -> Result<ProfileInterval> {
    net.treatment_index(t1)?;
    net.treatment_index(t2)?;
    if t1 == t2 {
        return Ok(ProfileInterval {
            interval: Interval {
                low: 0.0,
                high: 0.0,
            },
            deviance_low: 0.0,
            deviance_high: 0.0,
            critical: chi2_1_quantile(level)?,
        });
    }
    let refit;
    let (net, fit) = if fit.reference_label() == t1 {
        (net.clone(), fit)
    } else {
        let rnet = net.with_reference(t1)?;
        refit = plfit::fit(&rnet, &fit.options)?;
        (rnet, &refit)
    };
    let dm = DesignMatrix::build(&net)?;
    let param = fit
        .treatment_param(t2)?
        .expect("t2 differs from the reference");
    profile_ci(&net, &dm, fit, param, level)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContrastRow {
    pub t1: String,
    pub t2: String,
    pub estimate: f64,
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub ci_kind: CiKind,
    pub phi_applied: f64,
}

impl ContrastRow {
    /// Label `t2:t1`, the log odds ratio of `t2` versus `t1`.
    pub fn label(&self) -> String {
        format!("{}:{}", self.t2, self.t1)
    }

    pub fn reversed(&self) -> Self {
        Self {
            t1: self.t2.clone(),
            t2: self.t1.clone(),
            estimate: -self.estimate,
            se: self.se,
            ci_low: -self.ci_high,
            ci_high: -self.ci_low,
            ci_kind: self.ci_kind,
            phi_applied: self.phi_applied,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContrastTable {
    pub reference: String,
    pub level: f64,
    pub ci_kind: CiKind,
    pub rows: Vec<ContrastRow>,
}

impl ContrastTable {
    /// Row for `(t1, t2)`, reversing a stored `(t2, t1)` row when needed.
    pub fn get(&self, t1: &str, t2: &str) -> Option<ContrastRow> {
        self.rows.iter().find_map(|r| {
            if r.t1 == t1 && r.t2 == t2 {
                Some(r.clone())
            } else if r.t1 == t2 && r.t2 == t1 {
                Some(r.reversed())
            } else {
                None
            }
        })
    }

    /// Rows comparing each treatment against the reference.
    pub fn versus_reference(&self) -> impl Iterator<Item = &ContrastRow> {
        self.rows.iter().filter(move |r| r.t1 == self.reference)
    }
}

/// All `T(T−1)/2` Wald contrasts, SEs multiplied by `√phi`.
pub fn wald_table(effects: &TreatmentEffects, level: f64, phi: f64) -> Result<ContrastTable> {
    crate::overdispersion::check_phi(phi)?;
    let order = effects.display_order();
    let scaled = effects.scale_covariance(phi);
    let mut rows = Vec::new();
    for (i, &a) in order.iter().enumerate() {
        for &b in &order[i + 1..] {
            let c = scaled.contrast_idx(a, b);
            let ci = wald_interval(c.estimate, c.se, level)?;
            rows.push(ContrastRow {
                t1: effects.treatments[a].clone(),
                t2: effects.treatments[b].clone(),
                estimate: c.estimate,
                se: c.se,
                ci_low: ci.low,
                ci_high: ci.high,
                ci_kind: CiKind::Wald,
                phi_applied: phi,
            });
        }
    }
    Ok(ContrastTable {
        reference: effects.treatments[effects.reference].clone(),
        level,
        ci_kind: CiKind::Wald,
        rows,
    })
}

/// League table of a likelihood fit. Profile intervals are never φ-inflated;
/// `phi` only affects Wald rows.
pub fn league_table(
    net: &Network,
    fit: &FitResult,
    kind: CiKind,
    level: f64,
    phi: f64,
) -> Result<ContrastTable> {
    if !fit.converged {
        return Err(Error::NotConvergedFit);
    }
    match kind {
        CiKind::Wald => wald_table(&fit.effects(), level, phi),
        CiKind::Profile => {
            crate::overdispersion::check_phi(phi)?;
            let effects = fit.effects();
            let order = effects.display_order();
            let mut rows = Vec::new();
            for (i, &a) in order.iter().enumerate() {
                let t1 = &effects.treatments[a];
                let refit;
                let (rnet, rfit) = if a == fit.reference() {
                    (net.clone(), fit)
                } else {
                    let rnet = net.with_reference(t1)?;
                    refit = plfit::fit(&rnet, &fit.options)?;
                    if !refit.converged {
                        return Err(Error::NotConvergedFit);
                    }
                    (rnet, &refit)
                };
                let dm = DesignMatrix::build(&rnet)?;
                for &b in &order[i + 1..] {
                    let t2 = &effects.treatments[b];
                    let c = effects.contrast_idx(a, b);
                    let param = rfit.treatment_param(t2)?.expect("distinct treatments");
                    let pi = profile_ci(&rnet, &dm, rfit, param, level)?;
                    rows.push(ContrastRow {
                        t1: t1.clone(),
                        t2: t2.clone(),
                        estimate: c.estimate,
                        se: c.se,
                        ci_low: pi.interval.low,
                        ci_high: pi.interval.high,
                        ci_kind: CiKind::Profile,
                        phi_applied: 1.0,
                    });
                }
            }
            Ok(ContrastTable {
                reference: effects.treatments[effects.reference].clone(),
                level,
                ci_kind: CiKind::Profile,
                rows,
            })
        }
    }
}
