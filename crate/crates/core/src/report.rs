//! Full analysis of one dataset, in a serializable form.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dimension::{Reference, TestResult};
use crate::error::{IhtError, Result};
use crate::inference::{directions, k_hat_from_trail, Analysis};
use crate::standardize::Dataset;

/// Bumped whenever a field is added, removed or changes meaning.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSummary {
    pub n: usize,
    pub p: usize,
    pub response: String,
    pub columns: Vec<String>,
    /// Columns replaced by their natural logarithm before analysis.
    pub log_columns: Vec<String>,
}

/// A `p x k` direction matrix stored column by column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Directions {
    pub reference: Reference,
    pub k_hat: usize,
    pub z_scale: Vec<Vec<f64>>,
    pub x_scale: Vec<Vec<f64>>,
}

/// Coordinates for residual plots: the first two IHT predictors `v̂ⱼᵀẐ`
/// and the OLS residuals `ê`, one entry per observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Diagnostics {
    pub response: Vec<f64>,
    pub predictors: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Report {
    pub schema_version: u32,
    pub dataset: DatasetSummary,
    pub alpha: f64,
    /// Eigenvalues of `nB̂B̂ᵀ`, descending.
    pub lambdas: Vec<f64>,
    /// Every test `j = 0..p`, regardless of where the sequence stops.
    pub trail: Vec<TestResult>,
    pub k_hat_chisq: usize,
    pub k_hat_weighted: usize,
    pub directions: Vec<Directions>,
    pub diagnostics: Diagnostics,
}

fn columns(m: &nalgebra::DMatrix<f64>) -> Vec<Vec<f64>> {
    m.column_iter()
        .map(|c| c.iter().copied().collect())
        .collect()
}

/// Runs all `p` tests on `d` (already log-transformed as recorded in
/// `log_columns`) and collects everything a reader needs.
pub fn build_report(d: &Dataset, alpha: f64, log_columns: &[String]) -> Result<Report> {
    let a = Analysis::new(d)?;
    let p = a.p();
    let trail = a.full_trail()?;
    let k_hat_chisq = k_hat_from_trail(&trail, p, alpha, Reference::Chisq)?;
    let k_hat_weighted = k_hat_from_trail(&trail, p, alpha, Reference::Weighted)?;
    let mut dirs = Vec::new();
    for (reference, k) in [
        (Reference::Chisq, k_hat_chisq),
        (Reference::Weighted, k_hat_weighted),
    ] {
        let (z, x) = directions(&a.spectrum, k, &a.sample.sigma_inv_sqrt)?;
        dirs.push(Directions {
            reference,
            k_hat: k,
            z_scale: columns(&z),
            x_scale: columns(&x),
        });
    }
    let lead = a.spectrum.left_vectors.columns(0, p.min(2));
    let preds = &a.sample.z_hat * lead;
    Ok(Report {
        schema_version: SCHEMA_VERSION,
        dataset: DatasetSummary {
            n: d.n(),
            p,
            response: d.response_name.clone(),
            columns: d.column_names.clone(),
            log_columns: log_columns.to_vec(),
        },
        alpha,
        lambdas: a.spectrum.lambdas.iter().copied().collect(),
        trail,
        k_hat_chisq,
        k_hat_weighted,
        directions: dirs,
        diagnostics: Diagnostics {
            response: d.y.iter().copied().collect(),
            predictors: columns(&preds),
            residuals: a.fit.e_hat.iter().copied().collect(),
        },
    })
}

/// Four significant digits, switching to scientific notation outside
/// `[1e-3, 1e6)`.
pub fn format_sig4(x: f64) -> String {
    if x == 0.0 {
        return "0.000".into();
    }
    let mag = x.abs();
    if !(1e-3..1e6).contains(&mag) {
        return format!("{x:.3e}");
    }
    let digits = mag.log10().floor() as i32;
    let decimals = (3 - digits).max(0) as usize;
    let s = format!("{x:.decimals$}");
    // Rounding can carry into a new digit (999.95 -> "1000.0").
    let reparsed: f64 = s.parse().unwrap_or(x);
    if reparsed.abs().log10().floor() as i32 > digits && decimals > 0 {
        let decimals = decimals - 1;
        return format!("{x:.decimals$}");
    }
    s
}

fn format_p(p: Option<f64>) -> String {
    p.map_or_else(|| "-".into(), |v| format!("{v:.3}"))
}

impl Report {
    /// The test table: `j`, `T_j`, df and both p-values, p-values to three
    /// decimals.
    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:>3}  {:>10}  {:>3}  {:>10}  {:>10}",
            "j", "T_j", "df", "chisq p", "wchisq p"
        );
        for r in &self.trail {
            let _ = writeln!(
                out,
                "{:>3}  {:>10}  {:>3}  {:>10}  {:>10}",
                r.j,
                format_sig4(r.t),
                r.df,
                format_p(r.p_chisq),
                format_p(r.p_weighted)
            );
        }
        out
    }

    /// Table plus the dimension estimates.
    pub fn summary(&self) -> String {
        let mut out = format!(
            "n = {}, p = {}, response = {}\n",
            self.dataset.n, self.dataset.p, self.dataset.response
        );
        out.push_str(&self.table());
        let _ = writeln!(
            out,
            "k_hat (alpha = {}): chisq {}, weighted {}",
            self.alpha, self.k_hat_chisq, self.k_hat_weighted
        );
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Report> {
        let r: Report = serde_json::from_str(text)
            .map_err(|e| IhtError::InvalidData(format!("report json: {e}")))?;
        if r.schema_version != SCHEMA_VERSION {
            return Err(IhtError::InvalidData(format!(
                "report schema version {} is not supported (expected {SCHEMA_VERSION})",
                r.schema_version
            )));
        }
        Ok(r)
    }

    /// Diagnostic coordinates as CSV: `y, iht1[, iht2], residual`.
    pub fn diagnostics_csv(&self) -> String {
        let d = &self.diagnostics;
        let mut out = String::from("y");
        for k in 0..d.predictors.len() {
            let _ = write!(out, ",iht{}", k + 1);
        }
        out.push_str(",residual\n");
        for i in 0..d.residuals.len() {
            let _ = write!(out, "{}", d.response[i]);
            for col in &d.predictors {
                let _ = write!(out, ",{}", col[i]);
            }
            let _ = writeln!(out, ",{}", d.residuals[i]);
        }
        out
    }
}
