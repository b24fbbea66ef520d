use std::fmt::Write as _;
use std::io::Write;

use plnma::{CiKind, ContrastRow, DfMode};
use serde::{Deserialize, Serialize};

use crate::analysis::{Analysis, Model};
use crate::error::{CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;

/// One forest-plot row; the CSV emission has exactly these columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub method: String,
    /// `t2:t1`, the log odds ratio of `t2` versus `t1`.
    pub contrast: String,
    pub estimate: f64,
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub ci_kind: CiKind,
    pub phi: f64,
}

impl ReportRow {
    pub fn from_contrast(method: &str, row: &ContrastRow) -> Self {
        Self {
            method: method.to_string(),
            contrast: row.label(),
            estimate: row.estimate,
            se: row.se,
            ci_low: row.ci_low,
            ci_high: row.ci_high,
            ci_kind: row.ci_kind,
            phi: row.phi_applied,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhiReport {
    pub value: f64,
    pub raw: f64,
    pub df_mode: DfMode,
    pub df: usize,
    pub pearson: f64,
    pub s_bar: f64,
    pub denominator_nonpositive: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub converged: bool,
    pub iterations: Option<usize>,
    pub max_abs_score: Option<f64>,
    pub loglik: Option<f64>,
    pub penalized_loglik: Option<f64>,
    pub tau2: Option<f64>,
    pub q: Option<f64>,
    pub q_df: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllZeroHandling {
    pub included: bool,
    pub all_zero_studies: Vec<String>,
    pub excluded_studies: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub rows: usize,
    pub studies: usize,
    pub treatments: usize,
    /// Arms with no events.
    pub zero_cells: usize,
    /// Arms where every participant had the event.
    pub full_cells: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReportDocument {
    pub schema_version: u32,
    pub method: String,
    pub reference: String,
    pub level: f64,
    pub ci_kind: CiKind,
    /// Every treatment versus the reference.
    pub estimates: Vec<ReportRow>,
    /// All pairwise contrasts.
    pub league: Vec<ReportRow>,
    pub phi: Option<PhiReport>,
    pub diagnostics: Diagnostics,
    pub all_zero: AllZeroHandling,
    pub input: InputDigest,
    pub notes: Vec<String>,
}

impl FitReportDocument {
    /// Report with `estimates` taken from the league rows against the reference.
    pub fn build(a: &Analysis, league: &[ContrastRow]) -> Self {
        let method = a.method.as_str();
        let reference = a.reference().to_string();
        let estimates = league
            .iter()
            .filter(|r| r.t1 == reference)
            .map(|r| ReportRow::from_contrast(method, r))
            .collect();
        Self::with_rows(
            a,
            estimates,
            league
                .iter()
                .map(|r| ReportRow::from_contrast(method, r))
                .collect(),
        )
    }

    pub fn with_rows(a: &Analysis, estimates: Vec<ReportRow>, league: Vec<ReportRow>) -> Self {
        let diagnostics = match &a.model {
            Model::Likelihood(fit) => Diagnostics {
                converged: fit.converged,
                iterations: Some(fit.iterations),
                max_abs_score: Some(fit.max_abs_score),
                loglik: Some(fit.loglik),
                penalized_loglik: Some(fit.penalized_loglik),
                tau2: None,
                q: None,
                q_df: None,
            },
            Model::Iv { fit, tau2 } => Diagnostics {
                converged: true,
                iterations: None,
                max_abs_score: None,
                loglik: None,
                penalized_loglik: None,
                tau2: Some(fit.tau2),
                q: tau2.as_ref().map(|t| t.q),
                q_df: tau2.as_ref().map(|t| t.df),
            },
        };
        let (zero_cells, full_cells) = a.input.zero_cell_counts();
        Self {
            schema_version: SCHEMA_VERSION,
            method: a.method.as_str().to_string(),
            reference: a.reference().to_string(),
            level: a.level,
            ci_kind: a.ci_kind,
            estimates,
            league,
            phi: a.phi.map(|p| PhiReport {
                value: p.phi,
                raw: p.phi_raw,
                df_mode: p.df_mode,
                df: p.m,
                pearson: p.pearson,
                s_bar: p.s_bar,
                denominator_nonpositive: p.denominator_nonpositive,
            }),
            diagnostics,
            all_zero: AllZeroHandling {
                included: a.all_zero_included,
                all_zero_studies: a.input.all_zero_studies().into_iter().collect(),
                excluded_studies: a.excluded.clone(),
            },
            input: InputDigest {
                rows: a.input.arm_total(),
                studies: a.input.n_studies(),
                treatments: a.input.n_treatments(),
                zero_cells,
                full_cells,
            },
            notes: a.notes.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> CliResult<Self> {
        serde_json::from_str(text)
            .map_err(|e| CliError::new(plnma::ErrorCategory::Parse, e.to_string()))
    }

    pub fn render_table(&self, rows: &[ReportRow]) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "method: {}  reference: {}  ci: {} {:.0}%",
            self.method,
            self.reference,
            self.ci_kind.as_str(),
            self.level * 100.0
        );
        let _ = writeln!(
            out,
            "input: {} studies, {} treatments, {} arms ({} with zero events)",
            self.input.studies, self.input.treatments, self.input.rows, self.input.zero_cells
        );
        if !self.all_zero.all_zero_studies.is_empty() {
            let _ = writeln!(
                out,
                "all-zero studies: {} ({})",
                self.all_zero.all_zero_studies.join(", "),
                if self.all_zero.included {
                    "included"
                } else {
                    "excluded"
                }
            );
        }
        if let Some(phi) = &self.phi {
            let _ = writeln!(
                out,
                "phi: {:.4} (raw {:.4}, df {} [{}])",
                phi.value,
                phi.raw,
                phi.df,
                phi.df_mode.as_str()
            );
        }
        if let Some(tau2) = self.diagnostics.tau2 {
            let _ = writeln!(out, "tau2: {tau2:.4}");
        }
        let width = rows
            .iter()
            .map(|r| r.contrast.len())
            .max()
            .unwrap_or(0)
            .max(8);
        let _ = writeln!(
            out,
            "\n{:<width$}  {:>9}  {:>9}  {:>9}  {:>9}",
            "contrast", "estimate", "se", "ci_low", "ci_high"
        );
        for r in rows {
            let _ = writeln!(
                out,
                "{:<width$}  {:>9.4}  {:>9.4}  {:>9.4}  {:>9.4}",
                r.contrast, r.estimate, r.se, r.ci_low, r.ci_high
            );
        }
        for note in &self.notes {
            let _ = writeln!(out, "note: {note}");
        }
        out
    }
}

pub fn write_csv<W: Write>(rows: &[ReportRow], out: W) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)
            .map_err(|e| CliError::config(e.to_string()))?;
    }
    w.flush().map_err(|e| CliError::config(e.to_string()))
}

pub fn csv_string(rows: &[ReportRow]) -> CliResult<String> {
    let mut buf = Vec::new();
    if rows.is_empty() {
        buf.extend_from_slice(b"method,contrast,estimate,se,ci_low,ci_high,ci_kind,phi\n");
    } else {
        write_csv(rows, &mut buf)?;
    }
    Ok(String::from_utf8(buf).expect("csv is utf-8"))
}
