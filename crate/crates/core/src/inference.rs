//! Sequential estimation of the dimension and recovery of the directions.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dimension::{run_test, Reference, TestResult};
use crate::error::{IhtError, Result};
use crate::fit::{fit_iht, iht_spectrum, IhtFit, IhtSpectrum};
use crate::standardize::{standardize, Dataset, StandardizedSample};

/// Everything computed from a dataset before any test is run.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub sample: StandardizedSample,
    pub fit: IhtFit,
    pub spectrum: IhtSpectrum,
}

impl Analysis {
    pub fn new(d: &Dataset) -> Result<Self> {
        let sample = standardize(d)?;
        let fit = fit_iht(&sample);
        let spectrum = iht_spectrum(&fit)?;
        Ok(Analysis {
            sample,
            fit,
            spectrum,
        })
    }

    pub fn p(&self) -> usize {
        self.sample.p()
    }

    pub fn test(&self, j: usize, reference: Reference) -> Result<TestResult> {
        run_test(&self.sample, &self.fit, &self.spectrum, j, reference)
    }

    /// All `p` tests, `j = 0..p`, with both references.
    pub fn full_trail(&self) -> Result<Vec<TestResult>> {
        (0..self.p())
            .map(|j| self.test(j, Reference::Both))
            .collect()
    }

    /// Runs tests in order until `reference` first fails to reject.
    /// Both p-values are recorded in every entry.
    pub fn sequential(&self, alpha: f64, reference: Reference) -> Result<Vec<TestResult>> {
        check_decision(alpha, reference)?;
        let mut trail = Vec::new();
        for j in 0..self.p() {
            match self.test(j, Reference::Both) {
                Ok(r) => {
                    let stop = decision_p(&r, reference) > alpha;
                    trail.push(r);
                    if stop {
                        break;
                    }
                }
                Err(e) => {
                    return Err(IhtError::Sequential {
                        trail,
                        source: Box::new(e),
                    })
                }
            }
        }
        Ok(trail)
    }
}

/// Result of the sequential procedure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionEstimate {
    pub k_hat: usize,
    pub alpha: f64,
    pub reference: Reference,
    pub trail: Vec<TestResult>,
    /// `p x k̂`, orthonormal, standardized scale.
    pub directions_z: DMatrix<f64>,
    /// `p x k̂`, unit-length columns, original predictor scale.
    pub directions_x: DMatrix<f64>,
}

fn check_decision(alpha: f64, reference: Reference) -> Result<()> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(IhtError::InvalidArgument(format!(
            "alpha must lie in (0, 1], got {alpha}"
        )));
    }
    if reference == Reference::Both {
        return Err(IhtError::InvalidArgument(
            "decisions need a single reference, chisq or weighted".into(),
        ));
    }
    Ok(())
}

fn decision_p(r: &TestResult, reference: Reference) -> f64 {
    r.p_value(reference).expect("both p-values are computed")
}

/// `k̂` implied by a trail: the first `j` whose p-value exceeds `alpha`, or
/// `p` when every test rejects.
pub fn k_hat_from_trail(
    trail: &[TestResult],
    p: usize,
    alpha: f64,
    reference: Reference,
) -> Result<usize> {
    check_decision(alpha, reference)?;
    for r in trail {
        let pv = r.p_value(reference).ok_or_else(|| {
            IhtError::InvalidArgument(format!("trail lacks {reference} p-values"))
        })?;
        if pv > alpha {
            return Ok(r.j);
        }
    }
    if trail.len() < p {
        return Err(IhtError::InvalidArgument(format!(
            "trail of length {} stops before a non-rejection",
            trail.len()
        )));
    }
    Ok(p)
}

/// Tests `H₀,₀, H₀,₁, …` at constant level `alpha` and stops at the first
/// non-rejection. `reference` must be `Chisq` or `Weighted`.
pub fn estimate_dimension(
    d: &Dataset,
    alpha: f64,
    reference: Reference,
) -> Result<DimensionEstimate> {
    check_decision(alpha, reference)?;
    let a = Analysis::new(d)?;
    estimate_from_analysis(&a, alpha, reference)
}

pub fn estimate_from_analysis(
    a: &Analysis,
    alpha: f64,
    reference: Reference,
) -> Result<DimensionEstimate> {
    let trail = a.sequential(alpha, reference)?;
    let k_hat = k_hat_from_trail(&trail, a.p(), alpha, reference)?;
    let (directions_z, directions_x) = directions(&a.spectrum, k_hat, &a.sample.sigma_inv_sqrt)?;
    Ok(DimensionEstimate {
        k_hat,
        alpha,
        reference,
        trail,
        directions_z,
        directions_x,
    })
}

/// The leading `k` left singular vectors of `B̂` and their images
/// `Σ̂^{-1/2} v̂ⱼ` scaled to unit length. `k = 0` yields empty matrices.
pub fn directions(
    spec: &IhtSpectrum,
    k: usize,
    sigma_inv_sqrt: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let p = spec.p();
    if k > p {
        return Err(IhtError::OutOfRange {
            index: k,
            upper: p + 1,
        });
    }
    if sigma_inv_sqrt.shape() != (p, p) {
        return Err(IhtError::InvalidArgument(format!(
            "sigma_inv_sqrt is {:?}, expected ({p}, {p})",
            sigma_inv_sqrt.shape()
        )));
    }
    let z = spec.left_vectors.columns(0, k).into_owned();
    let mut x = sigma_inv_sqrt * &z;
    for mut c in x.column_iter_mut() {
        let norm = c.norm();
        if norm > 0.0 {
            c /= norm;
        }
    }
    Ok((z, x))
}

/// Largest principal angle in radians between the column spans of `a` and `b`.
pub fn max_principal_angle(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let qa = a.clone().qr().q();
    let qb = b.clone().qr().q();
    let sv = (qa.transpose() * qb).singular_values();
    let min = sv
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
        .clamp(-1.0, 1.0);
    min.acos()
}
