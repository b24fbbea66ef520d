//! Two-stage multiplicative heterogeneity: Pearson statistic, Fletcher's
//! overdispersion estimate, and variance inflation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{CiKind, ContrastTable, TreatmentEffects};
use crate::netdata::Network;
use crate::plfit::FitResult;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DfMode {
    /// `m = (T − 1) + (N − 1)`.
    #[default]
    Paper,
    /// `m = Σ Aᵢ − (N + T − 1)`.
    Residual,
}

impl DfMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            DfMode::Paper => "paper",
            DfMode::Residual => "residual",
        }
    }

    pub fn degrees_of_freedom(&self, net: &Network) -> i64 {
        let (n, t, arms) = (
            net.n_studies() as i64,
            net.n_treatments() as i64,
            net.arm_total() as i64,
        );
        match self {
            DfMode::Paper => (t - 1) + (n - 1),
            DfMode::Residual => arms - (n + t - 1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhiEstimate {
    /// Fletcher value before clamping.
    pub phi_raw: f64,
    /// `max(1, phi_raw)`; 1 when the denominator is non-positive.
    pub phi: f64,
    pub pearson: f64,
    pub df_mode: DfMode,
    pub m: usize,
    pub s_bar: f64,
    /// Set when `1 + s̄ ≤ 0`; `phi` is then forced to 1.
    pub denominator_nonpositive: bool,
}

pub fn check_phi(phi: f64) -> Result<()> {
    if phi.is_finite() && phi >= 1.0 {
        Ok(())
    } else {
        Err(Error::PhiOutOfRange(phi))
    }
}

fn arm_variances(net: &Network, p_hat: &[f64]) -> Result<Vec<(f64, f64, f64)>> {
    if p_hat.len() != net.arm_total() {
        return Err(Error::DimensionMismatch {
            expected: net.arm_total(),
            got: p_hat.len(),
        });
    }
    net.arms()
        .zip(p_hat)
        .enumerate()
        .map(|(i, ((_, arm), &p))| {
            let n = arm.sample_size as f64;
            let v = n * p * (1.0 - p);
            if v.is_nan() || v <= 0.0 {
                return Err(Error::DegenerateFit { arm: i });
            }
            Ok((arm.events as f64 - n * p, v, n * (1.0 - 2.0 * p)))
        })
        .collect()
}

/// `Σ (r − n p̂)² / (n p̂ (1 − p̂))` for arbitrary fitted probabilities.
pub fn pearson_from_probabilities(net: &Network, p_hat: &[f64]) -> Result<f64> {
    Ok(arm_variances(net, p_hat)?
        .iter()
        .map(|(resid, v, _)| resid * resid / v)
        .sum())
}

pub fn pearson_statistic(fit: &FitResult, net: &Network) -> Result<f64> {
    if !fit.converged {
        return Err(Error::NotConvergedFit);
    }
    pearson_from_probabilities(net, fit.p_hat.as_slice())
}

/// Fletcher's estimate from arbitrary fitted probabilities.
pub fn fletcher_from_probabilities(
    net: &Network,
    p_hat: &[f64],
    df_mode: DfMode,
) -> Result<PhiEstimate> {
    let terms = arm_variances(net, p_hat)?;
    let m = df_mode.degrees_of_freedom(net);
    if m < 1 {
        return Err(Error::NoResidualDf);
    }
    let pearson: f64 = terms.iter().map(|(resid, v, _)| resid * resid / v).sum();
    let s_bar = terms
        .iter()
        .map(|(resid, v, dv)| dv * resid / v)
        .sum::<f64>()
        / terms.len() as f64;
    let phi_p = pearson / m as f64;
    let denom = 1.0 + s_bar;
    let denominator_nonpositive = denom <= 0.0;
    let phi_raw = phi_p / denom;
    let phi = if denominator_nonpositive {
        1.0
    } else {
        phi_raw.max(1.0)
    };
    Ok(PhiEstimate {
        phi_raw,
        phi,
        pearson,
        df_mode,
        m: m as usize,
        s_bar,
        denominator_nonpositive,
    })
}

pub fn fletcher_phi(fit: &FitResult, net: &Network, df_mode: DfMode) -> Result<PhiEstimate> {
    if !fit.converged {
        return Err(Error::NotConvergedFit);
    }
    fletcher_from_probabilities(net, fit.p_hat.as_slice(), df_mode)
}

/// Multiply variances by `phi`, leaving point estimates untouched.
pub trait Inflate: Sized {
    fn inflate(&self, phi: f64) -> Result<Self>;
}

impl Inflate for TreatmentEffects {
    fn inflate(&self, phi: f64) -> Result<Self> {
        check_phi(phi)?;
        Ok(self.scale_covariance(phi))
    }
}

impl Inflate for FitResult {
    fn inflate(&self, phi: f64) -> Result<Self> {
        check_phi(phi)?;
        let mut out = self.clone();
        out.cov *= phi;
        Ok(out)
    }
}

/// Wald rows get `se·√phi` and intervals widened about the estimate; profile
/// rows are returned unchanged.
impl Inflate for ContrastTable {
    fn inflate(&self, phi: f64) -> Result<Self> {
        check_phi(phi)?;
        let k = phi.sqrt();
        let mut out = self.clone();
        for row in out.rows.iter_mut().filter(|r| r.ci_kind == CiKind::Wald) {
            row.se *= k;
            row.ci_low = row.estimate - (row.estimate - row.ci_low) * k;
            row.ci_high = row.estimate + (row.ci_high - row.estimate) * k;
            row.phi_applied *= phi;
        }
        Ok(out)
    }
}
