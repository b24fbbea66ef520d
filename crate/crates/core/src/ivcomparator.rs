//! Inverse-variance GLS network meta-analysis on study-level log odds ratios,
//! with a 0.5 continuity correction and a generalized DerSimonian–Laird τ².

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::TreatmentEffects;
use crate::netdata::{components, Network, Study};

/// Added to every cell of every arm of a study with a zero cell.
pub const CONTINUITY_CORRECTION: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct StudyContrastBlock {
    pub study: String,
    /// Treatment index of the study baseline (its first arm).
    pub baseline: usize,
    /// Treatment indices of the remaining arms, aligned with `y`.
    pub others: Vec<usize>,
    pub y: DVector<f64>,
    pub v: DMatrix<f64>,
    pub corrected: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StudyContrasts {
    Block(StudyContrastBlock),
    /// No events in any arm; the study carries no usable log odds ratio.
    Excluded,
}

/// Log odds ratios of every arm against the study's first arm.
pub fn study_contrasts(study: &Study) -> StudyContrasts {
    if study.is_all_zero() {
        return StudyContrasts::Excluded;
    }
    let corrected = study.has_zero_cell();
    let inc = if corrected {
        CONTINUITY_CORRECTION
    } else {
        0.0
    };
    let cells: Vec<(f64, f64)> = study
        .arms
        .iter()
        .map(|a| (a.events as f64 + inc, a.non_events() as f64 + inc))
        .collect();

    let (eb, nb) = cells[0];
    let shared = 1.0 / eb + 1.0 / nb;
    let k = cells.len() - 1;
    let mut y = DVector::zeros(k);
    let mut v = DMatrix::from_element(k, k, shared);
    for (i, &(e, ne)) in cells[1..].iter().enumerate() {
        y[i] = (e * nb).ln() - (eb * ne).ln();
        v[(i, i)] = shared + 1.0 / e + 1.0 / ne;
    }
    StudyContrasts::Block(StudyContrastBlock {
        study: study.label.clone(),
        baseline: study.arms[0].treatment,
        others: study.arms[1..].iter().map(|a| a.treatment).collect(),
        y,
        v,
        corrected,
    })
}

/// Blocks for every usable study plus the labels of excluded studies.
pub fn network_blocks(net: &Network) -> (Vec<StudyContrastBlock>, Vec<String>) {
    let mut blocks = Vec::new();
    let mut excluded = Vec::new();
    for study in net.studies() {
        match study_contrasts(study) {
            StudyContrasts::Block(b) => blocks.push(b),
            StudyContrasts::Excluded => excluded.push(study.label.clone()),
        }
    }
    (blocks, excluded)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tau2Estimate {
    pub tau2: f64,
    /// Generalized Cochran's Q at the common-effect estimate.
    pub q: f64,
    pub df: i64,
    /// Coefficient of τ² in `E[Q]`.
    pub trace: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IvFit {
    effects: TreatmentEffects,
    /// τ² used in the weights (0 for the common-effect fit).
    pub tau2: f64,
    pub n_blocks: usize,
}

impl IvFit {
    pub fn effects(&self) -> &TreatmentEffects {
        &self.effects
    }
}

/// Parameter column for each treatment; the reference has none.
fn parameter_columns(net: &Network) -> Vec<Option<usize>> {
    let mut next = 0;
    (0..net.n_treatments())
        .map(|k| {
            if k == net.reference() {
                None
            } else {
                next += 1;
                Some(next - 1)
            }
        })
        .collect()
}

/// Rows mapping a block's contrasts onto basic parameters (+1 arm, −1 baseline).
fn block_design(block: &StudyContrastBlock, cols: &[Option<usize>], p: usize) -> DMatrix<f64> {
    let mut x = DMatrix::zeros(block.others.len(), p);
    for (i, &k) in block.others.iter().enumerate() {
        if let Some(c) = cols[k] {
            x[(i, c)] += 1.0;
        }
        if let Some(c) = cols[block.baseline] {
            x[(i, c)] -= 1.0;
        }
    }
    x
}

fn random_effects_structure(k: usize) -> DMatrix<f64> {
    DMatrix::from_fn(k, k, |i, j| if i == j { 1.0 } else { 0.5 })
}

fn inverse_spd(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    Ok(m.clone()
        .cholesky()
        .ok_or(Error::SingularInformation)?
        .inverse())
}

struct Weighted {
    x: DMatrix<f64>,
    v_inv: DMatrix<f64>,
}

fn weighted_blocks(
    blocks: &[StudyContrastBlock],
    cols: &[Option<usize>],
    p: usize,
    tau2: f64,
) -> Result<Vec<Weighted>> {
    blocks
        .iter()
        .map(|b| {
            let k = b.others.len();
            let v = &b.v + random_effects_structure(k) * tau2;
            Ok(Weighted {
                x: block_design(b, cols, p),
                v_inv: inverse_spd(&v)?,
            })
        })
        .collect()
}

/// GLS estimate of the basic parameters with block covariance `V + τ² B`.
pub fn gls_fit_with_tau2(blocks: &[StudyContrastBlock], net: &Network, tau2: f64) -> Result<IvFit> {
    let comps = components(
        net.n_treatments(),
        blocks.iter().map(|b| {
            std::iter::once(b.baseline)
                .chain(b.others.iter().copied())
                .collect()
        }),
    );
    if comps.len() > 1 {
        return Err(Error::DisconnectedAfterExclusion {
            components: comps.len(),
        });
    }
    let cols = parameter_columns(net);
    let p = net.n_treatments() - 1;
    let weighted = weighted_blocks(blocks, &cols, p, tau2)?;

    let mut a = DMatrix::zeros(p, p);
    let mut c = DVector::zeros(p);
    for (w, b) in weighted.iter().zip(blocks) {
        let xtv = w.x.transpose() * &w.v_inv;
        a += &xtv * &w.x;
        c += &xtv * &b.y;
    }
    let chol = a.cholesky().ok_or(Error::DisconnectedAfterExclusion {
        components: comps.len(),
    })?;
    let d_hat = chol.solve(&c);
    let cov_hat = chol.inverse();

    let t = net.n_treatments();
    let mut d = vec![0.0; t];
    let mut cov = DMatrix::zeros(t, t);
    for ka in 0..t {
        if let Some(ca) = cols[ka] {
            d[ka] = d_hat[ca];
            for kb in 0..t {
                if let Some(cb) = cols[kb] {
                    cov[(ka, kb)] = cov_hat[(ca, cb)];
                }
            }
        }
    }
    Ok(IvFit {
        effects: TreatmentEffects::new(net.treatments().to_vec(), net.reference(), d, cov),
        tau2,
        n_blocks: blocks.len(),
    })
}

/// Common-effect GLS fit.
pub fn gls_fit(blocks: &[StudyContrastBlock], net: &Network) -> Result<IvFit> {
    gls_fit_with_tau2(blocks, net, 0.0)
}

/// Method-of-moments τ²: `max(0, (Q − df) / tr(P B))`.
pub fn dl_tau2(
    blocks: &[StudyContrastBlock],
    net: &Network,
    common: &IvFit,
) -> Result<Tau2Estimate> {
    if blocks.len() < 2 {
        return Err(Error::InsufficientStudies {
            needed: 2,
            got: blocks.len(),
        });
    }
    let cols = parameter_columns(net);
    let p = net.n_treatments() - 1;
    let weighted = weighted_blocks(blocks, &cols, p, 0.0)?;
    let d_hat = DVector::from_iterator(
        p,
        (0..net.n_treatments())
            .filter(|&k| cols[k].is_some())
            .map(|k| common.effects.d()[k]),
    );

    let mut q = 0.0;
    let mut a = DMatrix::zeros(p, p);
    let mut tr_vinv_b = 0.0;
    let mut m = DMatrix::zeros(p, p);
    for (w, b) in weighted.iter().zip(blocks) {
        let e = &b.y - &w.x * &d_hat;
        q += (e.transpose() * &w.v_inv * &e)[(0, 0)];
        let bk = random_effects_structure(b.others.len());
        let xtv = w.x.transpose() * &w.v_inv;
        a += &xtv * &w.x;
        tr_vinv_b += (&w.v_inv * &bk).trace();
        m += &xtv * &bk * xtv.transpose();
    }
    let a_inv = inverse_spd(&a)?;
    let trace = tr_vinv_b - (a_inv * m).trace();
    let n_obs: usize = blocks.iter().map(|b| b.others.len()).sum();
    let df = n_obs as i64 - p as i64;
    let tau2 = if trace > 0.0 {
        ((q - df as f64) / trace).max(0.0)
    } else {
        0.0
    };
    Ok(Tau2Estimate { tau2, q, df, trace })
}

/// Full IV-NMA: build blocks, drop all-zero studies, fit common or random effects.
pub fn iv_nma(net: &Network, random: bool) -> Result<(IvFit, Option<Tau2Estimate>, Vec<String>)> {
    let (blocks, excluded) = network_blocks(net);
    let common = gls_fit(&blocks, net)?;
    if !random {
        return Ok((common, None, excluded));
    }
    let tau = dl_tau2(&blocks, net, &common)?;
    let re = gls_fit_with_tau2(&blocks, net, tau.tau2)?;
    Ok((re, Some(tau), excluded))
}
