//! Binomial log-likelihood for the one-stage logistic NMA model, Firth's
//! penalized variant, and a Fisher-scoring fitter for both.
//!
//! Parameters are ordered as in [`DesignMatrix`]: study intercepts first, then
//! the basic parameters `d_{ref,t}`. The penalty is `½ log det(ZᵀWZ)` and the
//! reported covariance is `(ZᵀWZ)⁻¹` at the estimate.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_binomial;

use crate::design::DesignMatrix;
use crate::error::{Error, Result};
use crate::inference::TreatmentEffects;
use crate::netdata::Network;

/// Log-odds magnitude beyond which an unpenalized estimate is treated as divergent.
pub const SEPARATION_THRESHOLD: f64 = 50.0;

/// Largest change of any parameter in one scoring step.
pub const MAX_STEP: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub penalized: bool,
    pub max_iter: usize,
    /// Max-abs (modified) score criterion.
    pub score_tol: f64,
    /// Max-abs Newton step criterion.
    pub step_tol: f64,
    pub step_halving_max: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            penalized: true,
            max_iter: 100,
            score_tol: 1e-6,
            step_tol: 1e-8,
            step_halving_max: 20,
        }
    }
}

impl FitOptions {
    pub fn penalized() -> Self {
        Self::default()
    }

    pub fn unpenalized() -> Self {
        Self {
            penalized: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.max_iter >= 1
            && self.score_tol > 0.0
            && self.step_tol > 0.0
            && self.score_tol.is_finite()
            && self.step_tol.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::ConfigInvalid(format!(
                "invalid fit options {self:?}"
            )))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub theta_hat: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub loglik: f64,
    /// Equals `loglik` for unpenalized fits.
    pub penalized_loglik: f64,
    pub p_hat: DVector<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub max_abs_score: f64,
    pub penalized: bool,
    /// Objective value after each accepted step, starting at the initial value.
    pub trace: Vec<f64>,
    pub param_labels: Vec<String>,
    pub options: FitOptions,
    treatments: Vec<String>,
    reference: usize,
    treatment_param: Vec<Option<usize>>,
}

impl FitResult {
    pub fn treatments(&self) -> &[String] {
        &self.treatments
    }

    pub fn reference(&self) -> usize {
        self.reference
    }

    pub fn reference_label(&self) -> &str {
        &self.treatments[self.reference]
    }

    /// Parameter index of `d_{ref,label}`; `None` for the reference itself.
    pub fn treatment_param(&self, label: &str) -> Result<Option<usize>> {
        let k = self
            .treatments
            .iter()
            .position(|t| t == label)
            .ok_or_else(|| Error::UnknownTreatment(label.to_string()))?;
        Ok(self.treatment_param[k])
    }

    pub fn se(&self, j: usize) -> f64 {
        self.cov[(j, j)].sqrt()
    }

    /// Basic parameters and their covariance, indexed by treatment.
    pub fn effects(&self) -> TreatmentEffects {
        let t = self.treatments.len();
        let mut d = vec![0.0; t];
        let mut cov = DMatrix::zeros(t, t);
        for a in 0..t {
            if let Some(ja) = self.treatment_param[a] {
                d[a] = self.theta_hat[ja];
                for b in 0..t {
                    if let Some(jb) = self.treatment_param[b] {
                        cov[(a, b)] = self.cov[(ja, jb)];
                    }
                }
            }
        }
        TreatmentEffects::new(self.treatments.clone(), self.reference, d, cov)
    }
}

fn expit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn check_dims(theta: &DVector<f64>, net: &Network, dm: &DesignMatrix) -> Result<()> {
    if dm.nrows() != net.arm_total() {
        return Err(Error::DimensionMismatch {
            expected: net.arm_total(),
            got: dm.nrows(),
        });
    }
    dm.check_len(theta.len())
}

/// `ZᵀWZ` with the study intercepts eliminated.
///
/// Each study block of the Schur complement is built from sums of the other
/// arms' weights, so no entry is formed by subtracting nearly equal numbers.
/// This keeps the log-determinant and hat values accurate when one arm of a
/// study has a negligible weight, as happens far out on a likelihood profile.
struct BlockInfo {
    n_studies: usize,
    /// Per study: total weight `W_i`.
    wsum: Vec<f64>,
    /// `D⁻¹B`: study-by-treatment-column weight shares.
    g: DMatrix<f64>,
    schur: DMatrix<f64>,
    schur_inv: DMatrix<f64>,
    logdet: f64,
}

impl BlockInfo {
    fn new(w: &DVector<f64>, dm: &DesignMatrix) -> Result<Self> {
        let ns = dm.n_studies();
        let nd = dm.ncols() - ns;
        let mut rows_of: Vec<Vec<usize>> = vec![Vec::new(); ns];
        for row in 0..dm.nrows() {
            rows_of[dm.row_columns(row).0].push(row);
        }
        let mut wsum = vec![0.0; ns];
        let mut g = DMatrix::zeros(ns, nd);
        let mut schur = DMatrix::zeros(nd, nd);
        for (i, rows) in rows_of.iter().enumerate() {
            let total: f64 = rows.iter().map(|&r| w[r]).sum();
            if total.is_nan() || total <= 0.0 {
                return Err(Error::SingularInformation);
            }
            wsum[i] = total;
            for &a in rows {
                let Some(ca) = dm.row_columns(a).1 else {
                    continue;
                };
                let ca = ca - ns;
                g[(i, ca)] = w[a] / total;
                let others: f64 = rows.iter().filter(|&&r| r != a).map(|&r| w[r]).sum();
                schur[(ca, ca)] += w[a] * others / total;
                for &b in rows {
                    if b == a {
                        continue;
                    }
                    if let Some(cb) = dm.row_columns(b).1 {
                        schur[(ca, cb - ns)] -= w[a] * w[b] / total;
                    }
                }
            }
        }
        let chol = schur.clone().cholesky().ok_or(Error::SingularInformation)?;
        let logdet = wsum.iter().map(|v| v.ln()).sum::<f64>()
            + 2.0
                * chol
                    .l_dirty()
                    .diagonal()
                    .iter()
                    .map(|v: &f64| v.ln())
                    .sum::<f64>();
        if !logdet.is_finite() {
            return Err(Error::SingularInformation);
        }
        Ok(Self {
            n_studies: ns,
            wsum,
            g,
            schur_inv: chol.inverse(),
            schur,
            logdet,
        })
    }

    /// Solve `(ZᵀWZ) x = u` over all parameters except `fixed` (a treatment
    /// column); the returned vector has a zero in the fixed position.
    fn solve(&self, u: &DVector<f64>, fixed: Option<usize>) -> Result<DVector<f64>> {
        let ns = self.n_studies;
        let nd = self.schur.nrows();
        let keep: Vec<usize> = (0..nd).filter(|&c| Some(c + ns) != fixed).collect();
        let sub = self.schur.select_rows(&keep).select_columns(&keep);
        let g = self.g.select_columns(&keep);
        let ua = u.rows(0, ns);
        let mut rhs = DVector::from_iterator(keep.len(), keep.iter().map(|&c| u[ns + c]));
        rhs -= g.transpose() * ua;
        let xd = sub
            .cholesky()
            .ok_or(Error::SingularInformation)?
            .solve(&rhs);
        let gx = &g * &xd;
        let mut x = DVector::zeros(ns + nd);
        for i in 0..ns {
            x[i] = ua[i] / self.wsum[i] - gx[i];
        }
        for (k, &c) in keep.iter().enumerate() {
            x[ns + c] = xd[k];
        }
        Ok(x)
    }

    fn inverse(&self) -> DMatrix<f64> {
        let ns = self.n_studies;
        let nd = self.schur.nrows();
        let gs = &self.g * &self.schur_inv;
        let mut inv = DMatrix::zeros(ns + nd, ns + nd);
        let aa = &gs * self.g.transpose();
        for i in 0..ns {
            for k in 0..ns {
                inv[(i, k)] = aa[(i, k)];
            }
            inv[(i, i)] += 1.0 / self.wsum[i];
            for c in 0..nd {
                inv[(i, ns + c)] = -gs[(i, c)];
                inv[(ns + c, i)] = -gs[(i, c)];
            }
        }
        inv.view_mut((ns, ns), (nd, nd)).copy_from(&self.schur_inv);
        inv
    }
}

/// Everything derived from one parameter vector.
struct Evaluation {
    p: DVector<f64>,
    w: DVector<f64>,
    loglik: f64,
    block: BlockInfo,
}

impl Evaluation {
    fn new(theta: &DVector<f64>, net: &Network, dm: &DesignMatrix) -> Result<Self> {
        let (p, w, loglik) = arm_terms(theta, net, dm)?;
        let block = BlockInfo::new(&w, dm)?;
        Ok(Self {
            p,
            w,
            loglik,
            block,
        })
    }

    fn objective(&self, penalized: bool) -> f64 {
        if penalized {
            self.loglik + 0.5 * self.block.logdet
        } else {
            self.loglik
        }
    }

    /// `h = w · xᵀ(ZᵀWZ)⁻¹x = w · (1/W + vᵀS⁻¹v)` with `v = e_c − g_study`.
    fn hat_diagonal(&self, dm: &DesignMatrix) -> DVector<f64> {
        let b = &self.block;
        let ns = b.n_studies;
        let nd = b.schur.nrows();
        let mut rows_of: Vec<Vec<usize>> = vec![Vec::new(); ns];
        for row in 0..dm.nrows() {
            rows_of[dm.row_columns(row).0].push(row);
        }
        DVector::from_iterator(
            dm.nrows(),
            (0..dm.nrows()).map(|row| {
                let (s, c) = dm.row_columns(row);
                let mut v = DVector::from_iterator(nd, (0..nd).map(|k| -b.g[(s, k)]));
                if let Some(c) = c {
                    let others: f64 = rows_of[s]
                        .iter()
                        .filter(|&&r| r != row)
                        .map(|&r| self.w[r])
                        .sum();
                    v[c - ns] = others / b.wsum[s];
                }
                let q = 1.0 / b.wsum[s] + v.dot(&(&b.schur_inv * &v));
                self.w[row] * q
            }),
        )
    }

    fn score(&self, net: &Network, dm: &DesignMatrix, penalized: bool) -> DVector<f64> {
        let mut resid = DVector::from_iterator(
            dm.nrows(),
            net.arms()
                .zip(self.p.iter())
                .map(|((_, a), &p)| a.events as f64 - a.sample_size as f64 * p),
        );
        if penalized {
            let h = self.hat_diagonal(dm);
            for (i, r) in resid.iter_mut().enumerate() {
                *r += h[i] * (0.5 - self.p[i]);
            }
        }
        dm.transpose_mul(&resid)
    }
}

/// Fitted probabilities, binomial weights and log-likelihood (with constants).
fn arm_terms(
    theta: &DVector<f64>,
    net: &Network,
    dm: &DesignMatrix,
) -> Result<(DVector<f64>, DVector<f64>, f64)> {
    check_dims(theta, net, dm)?;
    let eta = dm.linear_predictor(theta)?;
    let rows = dm.nrows();
    let mut p = DVector::zeros(rows);
    let mut w = DVector::zeros(rows);
    let mut loglik = 0.0;
    for (row, (_, arm)) in net.arms().enumerate() {
        let e = eta[row];
        let (r, n) = (arm.events as f64, arm.sample_size as f64);
        let pi = expit(e);
        p[row] = pi;
        w[row] = n * pi * (1.0 - pi);
        loglik +=
            ln_binomial(arm.sample_size, arm.events) - r * softplus(-e) - (n - r) * softplus(e);
    }
    Ok((p, w, loglik))
}

/// Binomial log-likelihood including the `log C(n, r)` constants.
pub fn log_likelihood(theta: &DVector<f64>, net: &Network, dm: &DesignMatrix) -> Result<f64> {
    Ok(arm_terms(theta, net, dm)?.2)
}

/// Expected information `ZᵀWZ` with `W = diag{n p (1 − p)}`.
pub fn fisher_information(
    theta: &DVector<f64>,
    net: &Network,
    dm: &DesignMatrix,
) -> Result<DMatrix<f64>> {
    let (_, w, _) = arm_terms(theta, net, dm)?;
    Ok(dm.weighted_gram(&w))
}

/// `l(θ) + ½ log det(ZᵀWZ)`.
pub fn penalized_log_likelihood(
    theta: &DVector<f64>,
    net: &Network,
    dm: &DesignMatrix,
) -> Result<f64> {
    objective(theta, net, dm, true)
}

/// Penalized or plain log-likelihood depending on `penalized`.
pub fn objective(
    theta: &DVector<f64>,
    net: &Network,
    dm: &DesignMatrix,
    penalized: bool,
) -> Result<f64> {
    if penalized {
        Ok(Evaluation::new(theta, net, dm)?.objective(true))
    } else {
        log_likelihood(theta, net, dm)
    }
}

/// Firth's modified score `Zᵀ[r − n p + h (½ − p)]`.
pub fn modified_score(
    theta: &DVector<f64>,
    net: &Network,
    dm: &DesignMatrix,
) -> Result<DVector<f64>> {
    score(theta, net, dm, true)
}

/// Modified score when `penalized`, otherwise the ordinary score `Zᵀ(r − n p)`.
pub fn score(
    theta: &DVector<f64>,
    net: &Network,
    dm: &DesignMatrix,
    penalized: bool,
) -> Result<DVector<f64>> {
    if penalized {
        Ok(Evaluation::new(theta, net, dm)?.score(net, dm, true))
    } else {
        let (p, _, _) = arm_terms(theta, net, dm)?;
        let resid = DVector::from_iterator(
            dm.nrows(),
            net.arms()
                .zip(p.iter())
                .map(|((_, a), &p)| a.events as f64 - a.sample_size as f64 * p),
        );
        Ok(dm.transpose_mul(&resid))
    }
}

/// Diagonal of `W^{1/2} Z (ZᵀWZ)⁻¹ Zᵀ W^{1/2}`.
pub fn hat_diagonal(
    theta: &DVector<f64>,
    net: &Network,
    dm: &DesignMatrix,
) -> Result<DVector<f64>> {
    Ok(Evaluation::new(theta, net, dm)?.hat_diagonal(dm))
}

/// Starting values: pooled per-study log-odds with a half-count correction, d = 0.
pub fn initial_theta(net: &Network, dm: &DesignMatrix) -> DVector<f64> {
    let mut theta = DVector::zeros(dm.ncols());
    for (i, study) in net.studies().iter().enumerate() {
        let r: u64 = study.arms.iter().map(|a| a.events).sum();
        let n: u64 = study.arms.iter().map(|a| a.sample_size).sum();
        let p = (r as f64 + 0.5) / (n as f64 + 1.0);
        theta[i] = (p / (1.0 - p)).ln();
    }
    theta
}

/// Outcome of a Fisher-scoring run, possibly with one parameter held fixed.
#[derive(Debug, Clone)]
pub struct ScoringOutcome {
    pub theta: DVector<f64>,
    pub objective: f64,
    pub loglik: f64,
    pub converged: bool,
    pub iterations: usize,
    pub max_abs_score: f64,
    pub trace: Vec<f64>,
}

/// Fisher scoring with step halving. When `fixed` is given that coordinate of
/// `start` is held constant and the remaining parameters are optimized.
pub fn fisher_scoring(
    net: &Network,
    dm: &DesignMatrix,
    opts: &FitOptions,
    start: DVector<f64>,
    fixed: Option<usize>,
) -> Result<ScoringOutcome> {
    opts.validate()?;
    check_dims(&start, net, dm)?;
    let p = dm.ncols();
    if let Some(j) = fixed {
        if j >= p {
            return Err(Error::ParameterIndex { index: j, len: p });
        }
    }
    let free: Vec<usize> = (0..p).filter(|&j| Some(j) != fixed).collect();

    let mut theta = start;
    let mut eval = Evaluation::new(&theta, net, dm)?;
    let mut obj = eval.objective(opts.penalized);
    let mut trace = vec![obj];
    let mut iterations = 0;
    let mut converged = false;
    let mut max_abs_score;

    loop {
        let u = eval.score(net, dm, opts.penalized);
        let u_free = DVector::from_iterator(free.len(), free.iter().map(|&j| u[j]));
        max_abs_score = u_free.amax();
        if free.is_empty() {
            converged = true;
            break;
        }

        let step = match fixed {
            Some(j) if j < dm.n_studies() => {
                let info = dm.weighted_gram(&eval.w);
                let sub = info.select_rows(&free).select_columns(&free);
                sub.cholesky()
                    .ok_or(Error::SingularInformation)?
                    .solve(&u_free)
            }
            _ => {
                let x = eval.block.solve(&u, fixed)?;
                DVector::from_iterator(free.len(), free.iter().map(|&j| x[j]))
            }
        };
        let max_step = step.amax();
        if max_step <= opts.step_tol {
            converged = true;
            let mut cand = theta.clone();
            for (k, &j) in free.iter().enumerate() {
                cand[j] += step[k];
            }
            if let Ok(ev) = Evaluation::new(&cand, net, dm) {
                let cand_obj = ev.objective(opts.penalized);
                if cand_obj.is_finite() && cand_obj >= obj - 1e-12 * (1.0 + obj.abs()) {
                    theta = cand;
                    eval = ev;
                    obj = cand_obj;
                }
            }
            break;
        }
        if iterations >= opts.max_iter {
            break;
        }

        let mut scale = (MAX_STEP / max_step).min(1.0);
        let mut accepted = None;
        for _ in 0..=opts.step_halving_max {
            let mut cand = theta.clone();
            for (k, &j) in free.iter().enumerate() {
                cand[j] += scale * step[k];
            }
            if !opts.penalized && cand.amax() > SEPARATION_THRESHOLD {
                return Err(Error::SeparationDetected {
                    threshold: SEPARATION_THRESHOLD,
                });
            }
            if let Ok(ev) = Evaluation::new(&cand, net, dm) {
                let cand_obj = ev.objective(opts.penalized);
                if cand_obj.is_finite() && cand_obj >= obj - 1e-12 * (1.0 + obj.abs()) {
                    accepted = Some((cand, ev, cand_obj));
                    break;
                }
            }
            scale *= 0.5;
        }
        let Some((cand, ev, cand_obj)) = accepted else {
            // No ascent left at floating-point resolution.
            converged = max_abs_score <= opts.score_tol;
            break;
        };
        theta = cand;
        eval = ev;
        obj = cand_obj;
        trace.push(obj);
        iterations += 1;
    }

    Ok(ScoringOutcome {
        theta,
        objective: obj,
        loglik: eval.loglik,
        converged,
        iterations,
        max_abs_score,
        trace,
    })
}

/// Fit the common-effect logistic NMA model, penalized or not.
///
/// Non-convergence is reported through `FitResult::converged`, not as an error.
pub fn fit(net: &Network, opts: &FitOptions) -> Result<FitResult> {
    let dm = DesignMatrix::build(net)?;
    fit_with_design(net, &dm, opts)
}

pub fn fit_with_design(net: &Network, dm: &DesignMatrix, opts: &FitOptions) -> Result<FitResult> {
    let start = initial_theta(net, dm);
    let out = fisher_scoring(net, dm, opts, start, None)?;
    let eval = Evaluation::new(&out.theta, net, dm)?;
    let cov = eval.block.inverse();
    let cov = (&cov + cov.transpose()) * 0.5;

    let treatment_param = (0..net.n_treatments())
        .map(|k| dm.treatment_column(k))
        .collect();
    Ok(FitResult {
        penalized_loglik: eval.objective(opts.penalized),
        loglik: eval.loglik,
        p_hat: eval.p,
        theta_hat: out.theta,
        cov,
        converged: out.converged,
        iterations: out.iterations,
        max_abs_score: out.max_abs_score,
        penalized: opts.penalized,
        trace: out.trace,
        param_labels: dm.col_labels.clone(),
        options: *opts,
        treatments: net.treatments().to_vec(),
        reference: net.reference(),
        treatment_param,
    })
}
