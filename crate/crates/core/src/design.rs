//! NMA design matrix: one row per arm, study-intercept columns followed by
//! basic treatment parameters relative to the network reference.
//!
//! With the intercept of study `i` defined as its log-odds under the network
//! reference, arm `(i, k)` has linear predictor `alpha_i + d_{ref,k}` and
//! `d_{ref,ref} = 0`, so every entry is 0 or 1.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::netdata::Network;

#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    matrix: DMatrix<f64>,
    n_studies: usize,
    row_study: Vec<usize>,
    row_treatment_col: Vec<Option<usize>>,
    /// Column of each treatment index; `None` for the reference.
    treatment_col: Vec<Option<usize>>,
    pub row_labels: Vec<(String, String)>,
    pub col_labels: Vec<String>,
}

impl DesignMatrix {
    pub fn build(net: &Network) -> Result<Self> {
        let comps = net.connectivity(false);
        if comps.len() > 1 {
            return Err(Error::DisconnectedNetwork {
                components: comps.len(),
            });
        }
        let n = net.n_studies();
        let t = net.n_treatments();
        let reference = net.reference();

        let mut treatment_col = vec![None; t];
        let mut col_labels: Vec<String> = net
            .studies()
            .iter()
            .map(|s| format!("alpha[{}]", s.label))
            .collect();
        let mut next = n;
        for (k, label) in net.treatments().iter().enumerate() {
            if k == reference {
                continue;
            }
            treatment_col[k] = Some(next);
            col_labels.push(format!("d[{},{}]", net.reference_label(), label));
            next += 1;
        }

        let rows = net.arm_total();
        let mut matrix = DMatrix::zeros(rows, n + t - 1);
        let mut row_study = Vec::with_capacity(rows);
        let mut row_treatment_col = Vec::with_capacity(rows);
        let mut row_labels = Vec::with_capacity(rows);
        for (row, (i, arm)) in net.arms().enumerate() {
            matrix[(row, i)] = 1.0;
            let col = treatment_col[arm.treatment];
            if let Some(c) = col {
                matrix[(row, c)] = 1.0;
            }
            row_study.push(i);
            row_treatment_col.push(col);
            row_labels.push((
                net.studies()[i].label.clone(),
                net.treatments()[arm.treatment].clone(),
            ));
        }

        Ok(Self {
            matrix,
            n_studies: n,
            row_study,
            row_treatment_col,
            treatment_col,
            row_labels,
            col_labels,
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn nrows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn n_studies(&self) -> usize {
        self.n_studies
    }

    /// Column of the basic parameter for treatment index `k`, `None` for the reference.
    pub fn treatment_column(&self, k: usize) -> Option<usize> {
        self.treatment_col[k]
    }

    /// `(study column, treatment column)` of each row.
    pub fn row_columns(&self, row: usize) -> (usize, Option<usize>) {
        (self.row_study[row], self.row_treatment_col[row])
    }

    pub fn linear_predictor(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_len(theta.len())?;
        Ok(DVector::from_iterator(
            self.nrows(),
            (0..self.nrows()).map(|row| {
                let (s, c) = self.row_columns(row);
                theta[s] + c.map_or(0.0, |c| theta[c])
            }),
        ))
    }

    /// `Zᵀ diag(w) Z`, assembled from the two-nonzero row structure.
    pub fn weighted_gram(&self, w: &DVector<f64>) -> DMatrix<f64> {
        let p = self.ncols();
        let mut g = DMatrix::zeros(p, p);
        for (row, &wi) in w.iter().enumerate() {
            let (s, c) = self.row_columns(row);
            g[(s, s)] += wi;
            if let Some(c) = c {
                g[(c, c)] += wi;
                g[(s, c)] += wi;
                g[(c, s)] += wi;
            }
        }
        g
    }

    /// `Zᵀ v`.
    pub fn transpose_mul(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.ncols());
        for (row, &vi) in v.iter().enumerate() {
            let (s, c) = self.row_columns(row);
            out[s] += vi;
            if let Some(c) = c {
                out[c] += vi;
            }
        }
        out
    }

    pub(crate) fn check_len(&self, len: usize) -> Result<()> {
        if len != self.ncols() {
            return Err(Error::DimensionMismatch {
                expected: self.ncols(),
                got: len,
            });
        }
        Ok(())
    }
}
