//! Tests of `H₀,j: rank(B) = j`.
//!
//! Both tests share the statistic `T_j = Ĉ₂⁻¹ Σ_{i>j} λ̂ᵢ`. Under the
//! constrained conditions it is referred to `χ²_{p-j}`; in general to
//! `Σ ω̂ᵢ Kᵢ` with `(p-j)²` weights estimated from the projected covariance
//! of the influence vectors `ξ̂`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::chisq::{chisq_sf, mixture_sf, MixtureSpec};
use crate::error::{IhtError, Result};
use crate::fit::{null_bases, IhtFit, IhtSpectrum, NullBases};
use crate::standardize::StandardizedSample;

/// Relative floor below which estimated weights are set to zero.
pub const WEIGHT_CLAMP_REL: f64 = 1e-10;

/// Which reference distribution(s) to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reference {
    Chisq,
    Weighted,
    #[default]
    Both,
}

impl Reference {
    pub fn wants_chisq(self) -> bool {
        matches!(self, Reference::Chisq | Reference::Both)
    }

    pub fn wants_weighted(self) -> bool {
        matches!(self, Reference::Weighted | Reference::Both)
    }
}

impl std::str::FromStr for Reference {
    type Err = IhtError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "chisq" | "chi2" | "chisquared" => Ok(Reference::Chisq),
            "weighted" => Ok(Reference::Weighted),
            "both" => Ok(Reference::Both),
            other => Err(IhtError::InvalidArgument(format!(
                "unknown reference '{other}'"
            ))),
        }
    }
}

impl std::fmt::Display for Reference {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Reference::Chisq => "chisq",
            Reference::Weighted => "weighted",
            Reference::Both => "both",
        })
    }
}

/// Outcome of one test in the sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub j: usize,
    pub t: f64,
    pub c2_hat: f64,
    pub df: usize,
    /// `(p-j)²` clamped weights, descending; empty when the weighted
    /// reference was not requested.
    pub weights: Vec<f64>,
    pub p_chisq: Option<f64>,
    pub p_weighted: Option<f64>,
}

impl TestResult {
    /// The p-value of the given single reference.
    pub fn p_value(&self, reference: Reference) -> Option<f64> {
        match reference {
            Reference::Chisq => self.p_chisq,
            Reference::Weighted => self.p_weighted,
            Reference::Both => None,
        }
    }
}

/// Per-observation influence vectors, row `i` = `(ξ̂₁ᵀ, …, ξ̂_pᵀ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct XiSample {
    pub xi: DMatrix<f64>,
}

fn usable_scale(c2: f64) -> bool {
    c2.is_finite() && c2 > 0.0
}

/// `T_j = Σ_{i>j} λ̂ᵢ / c2`.
pub fn statistic(spec: &IhtSpectrum, j: usize, c2: f64) -> Result<f64> {
    let p = spec.p();
    if j >= p {
        return Err(IhtError::OutOfRange { index: j, upper: p });
    }
    if !usable_scale(c2) {
        return Err(IhtError::DegenerateScaling(c2));
    }
    Ok(spec.tail_sum(j) / c2)
}

/// `Ĉ₂ = tr{Ψ̂₀ᵀ diag(1, B̂₀ᵀ) E_n(ŴŴᵀ) diag(1, B̂₀) Ψ̂₀}` with
/// `Ŵ = (Ŷ, êẐᵀ)ᵀ`, evaluated as `E_n ‖Ψ̂₀ᵀ (Ŷ, ê B̂₀ᵀẐ)ᵀ‖²`.
pub fn c2_hat(s: &StandardizedSample, f: &IhtFit, nb: &NullBases) -> Result<f64> {
    let n = s.n();
    let p = s.p();
    let b0 = f.b0_hat();
    let mut v = DVector::zeros(p);
    let mut total = 0.0;
    for i in 0..n {
        let z = s.z_hat.row(i).transpose();
        let e = f.e_hat[i];
        v[0] = s.y_hat[i];
        if p > 1 {
            let proj = b0.tr_mul(&z) * e;
            v.rows_mut(1, p - 1).copy_from(&proj);
        }
        total += nb.psi0.tr_mul(&v).norm_squared();
    }
    let c2 = total / n as f64;
    if !usable_scale(c2) {
        return Err(IhtError::DegenerateScaling(c2));
    }
    Ok(c2)
}

/// Precomputed pieces shared by every observation's `ξ̂`.
struct XiContext<'a> {
    f: &'a IhtFit,
}

impl XiContext<'_> {
    /// Writes `ξ̂` for one observation into `out` (length `p²`, block `m`
    /// holds `ξ̂_{m+1}`).
    ///
    /// Expanding `W = ẐẐᵀ − I` gives
    /// `ξ̂₁ = ŶẐ − ½(Ẑᵀβ̂)Ẑ − ½Ŷ²β̂` and, with `g = Ĥ^{m-2}β̂`,
    /// `ξ̂_m = (ê Ẑᵀg − ½ ẐᵀĤg) Ẑ − ê g − ½ (Ẑᵀg) ĤẐ − ½(Ŷ² − 1) Ĥg`.
    fn fill(&self, z: &DVector<f64>, y: f64, e: f64, out: &mut DVector<f64>) {
        let f = self.f;
        let p = z.len();
        let beta = &f.beta_hat;
        let y2 = y * y;

        let zb = z.dot(beta);
        {
            let mut blk = out.rows_mut(0, p);
            blk.copy_from(z);
            blk *= y - 0.5 * zb;
            blk.axpy(-0.5 * y2, beta, 1.0);
        }
        if p == 1 {
            return;
        }
        let hz = &f.h_hat * z;
        for m in 1..p {
            let g = f.b_hat.column(m - 1);
            let hg = f.b_hat.column(m);
            let zg = z.dot(&g);
            let zhg = z.dot(&hg);
            let mut blk = out.rows_mut(m * p, p);
            blk.copy_from(z);
            blk *= e * zg - 0.5 * zhg;
            blk.axpy(-e, &g, 1.0);
            blk.axpy(-0.5 * zg, &hz, 1.0);
            blk.axpy(-0.5 * (y2 - 1.0), &hg, 1.0);
        }
    }
}

/// Materializes `ξ̂` for every observation (`n x p²`).
pub fn xi_hat(s: &StandardizedSample, f: &IhtFit) -> XiSample {
    let n = s.n();
    let p = s.p();
    let ctx = XiContext { f };
    let mut xi = DMatrix::zeros(n, p * p);
    let mut buf = DVector::zeros(p * p);
    for i in 0..n {
        let z = s.z_hat.row(i).transpose();
        ctx.fill(&z, s.y_hat[i], f.e_hat[i], &mut buf);
        xi.set_row(i, &buf.transpose());
    }
    XiSample { xi }
}

/// The `p² x p²` block lower-triangular matrix with block `(r, c)` equal
/// to `H^{r-c}` for `r >= c`.
pub fn m_matrix(h: &DMatrix<f64>) -> DMatrix<f64> {
    let p = h.nrows();
    let mut powers = Vec::with_capacity(p);
    powers.push(DMatrix::identity(p, p));
    for k in 1..p {
        powers.push(h * &powers[k - 1]);
    }
    let mut m = DMatrix::zeros(p * p, p * p);
    for r in 0..p {
        for c in 0..=r {
            m.view_mut((r * p, c * p), (p, p)).copy_from(&powers[r - c]);
        }
    }
    m
}

/// Eigenvalues of `(Ψ̂₀ ⊗ Γ̂₀)ᵀ M̂ E_n(ξ̂ξ̂ᵀ) M̂ᵀ (Ψ̂₀ ⊗ Γ̂₀) / Ĉ₂`, descending,
/// with values below `1e-10 · max` set to zero.
///
/// Accumulates `aᵢ = vec(Γ̂₀ᵀ Yᵢ Ψ̂₀)` per observation, where the columns of
/// `Yᵢ` are the blocks of `M̂ξ̂ᵢ`; the `p² x p²` moment matrix is never formed.
pub fn weights(s: &StandardizedSample, f: &IhtFit, nb: &NullBases, c2: f64) -> Result<Vec<f64>> {
    if !usable_scale(c2) {
        return Err(IhtError::DegenerateScaling(c2));
    }
    let n = s.n();
    let p = s.p();
    let q = p - nb.j;
    let ctx = XiContext { f };
    let mut xi = DVector::zeros(p * p);
    let mut ymat = DMatrix::zeros(p, p);
    let mut moment = DMatrix::zeros(q * q, q * q);
    let mut a = DVector::zeros(q * q);
    for i in 0..n {
        let z = s.z_hat.row(i).transpose();
        ctx.fill(&z, s.y_hat[i], f.e_hat[i], &mut xi);
        // Columns of Yᵢ: y₀ = ξ₁, y_r = Ĥ y_{r-1} + ξ_{r+1}.
        ymat.set_column(0, &xi.rows(0, p));
        for r in 1..p {
            let next = &f.h_hat * ymat.column(r - 1) + xi.rows(r * p, p);
            ymat.set_column(r, &next);
        }
        let proj = nb.gamma0.tr_mul(&ymat) * &nb.psi0;
        a.copy_from_slice(proj.as_slice());
        moment.ger(1.0, &a, &a, 1.0);
    }
    moment /= n as f64 * c2;
    Ok(clamped_spectrum(moment))
}

/// Symmetric eigenvalues, descending, clamped at `WEIGHT_CLAMP_REL · max`.
pub(crate) fn clamped_spectrum(m: DMatrix<f64>) -> Vec<f64> {
    let sym = (&m + m.transpose()) * 0.5;
    let mut vals: Vec<f64> = SymmetricEigen::new(sym)
        .eigenvalues
        .iter()
        .copied()
        .collect();
    vals.sort_by(|a, b| b.total_cmp(a));
    let max = vals.first().copied().unwrap_or(0.0).max(0.0);
    for v in &mut vals {
        if *v < WEIGHT_CLAMP_REL * max {
            *v = 0.0;
        }
    }
    vals
}

/// Runs the test of `H₀,j`, evaluating the requested reference(s).
pub fn run_test(
    s: &StandardizedSample,
    f: &IhtFit,
    spec: &IhtSpectrum,
    j: usize,
    reference: Reference,
) -> Result<TestResult> {
    let nb = null_bases(spec, j)?;
    let c2 = c2_hat(s, f, &nb)?;
    let t = statistic(spec, j, c2)?;
    let df = spec.p() - j;

    let p_chisq = reference.wants_chisq().then(|| chisq_sf(t, df));
    let (w, p_weighted) = if reference.wants_weighted() {
        let w = weights(s, f, &nb, c2)?;
        let p = weighted_p_value(t, &w)?;
        (w, Some(p))
    } else {
        (Vec::new(), None)
    };

    Ok(TestResult {
        j,
        t,
        c2_hat: c2,
        df,
        weights: w,
        p_chisq,
        p_weighted,
    })
}

fn weighted_p_value(t: f64, w: &[f64]) -> Result<f64> {
    if t <= 0.0 {
        return Ok(1.0);
    }
    if !w.iter().any(|&v| v > 0.0) {
        // Degenerate reference: a point mass at zero.
        return Ok(0.0);
    }
    mixture_sf(t, &MixtureSpec::new(w.to_vec())?)
}
