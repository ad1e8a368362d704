//! The iterated-Hessian objects: OLS seed vector, residual-based Hessian,
//! the Krylov-type matrix `B̂ = (β̂, Ĥβ̂, …, Ĥ^{p-1}β̂)` and its singular
//! value decomposition.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{IhtError, Result};
use crate::standardize::StandardizedSample;

/// Fitted IHT quantities on the standardized scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IhtFit {
    pub beta_hat: DVector<f64>,
    pub e_hat: DVector<f64>,
    pub h_hat: DMatrix<f64>,
    /// `p x p`, column `m` is `Ĥ^m β̂`.
    pub b_hat: DMatrix<f64>,
    pub n: usize,
}

impl IhtFit {
    pub fn p(&self) -> usize {
        self.beta_hat.len()
    }

    /// First `p - 1` columns of `B̂`.
    pub fn b0_hat(&self) -> DMatrix<f64> {
        let p = self.p();
        self.b_hat.columns(0, p - 1).into_owned()
    }
}

/// Computes `β̂ = E_n(ŶẐ)`, `ê = Ŷ - β̂ᵀẐ`, `Ĥ = E_n(êẐẐᵀ)` and `B̂`.
pub fn fit_iht(s: &StandardizedSample) -> IhtFit {
    let n = s.n();
    let p = s.p();
    let nf = n as f64;
    let z = &s.z_hat;

    let beta_hat = z.tr_mul(&s.y_hat) / nf;
    let e_hat = &s.y_hat - z * &beta_hat;

    // Ĥ = Ẑᵀ diag(ê) Ẑ / n
    let mut weighted = z.clone();
    for (mut row, &e) in weighted.row_iter_mut().zip(e_hat.iter()) {
        row *= e;
    }
    let h = z.tr_mul(&weighted) / nf;
    let h_hat = (&h + h.transpose()) * 0.5;

    let mut b_hat = DMatrix::zeros(p, p);
    b_hat.set_column(0, &beta_hat);
    for m in 1..p {
        let next = &h_hat * b_hat.column(m - 1);
        b_hat.set_column(m, &next);
    }

    IhtFit {
        beta_hat,
        e_hat,
        h_hat,
        b_hat,
        n,
    }
}

/// Eigen-structure of `n B̂B̂ᵀ` obtained from the SVD of `B̂`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IhtSpectrum {
    /// Descending eigenvalues of `n B̂B̂ᵀ`.
    pub lambdas: DVector<f64>,
    /// Eigenvectors of `B̂B̂ᵀ` (left singular vectors), same order.
    pub left_vectors: DMatrix<f64>,
    /// Eigenvectors of `B̂ᵀB̂` (right singular vectors), same order.
    pub right_vectors: DMatrix<f64>,
}

impl IhtSpectrum {
    pub fn p(&self) -> usize {
        self.lambdas.len()
    }

    /// `Σ_{i>j} λ̂_i`.
    pub fn tail_sum(&self, j: usize) -> f64 {
        self.lambdas.iter().skip(j).sum()
    }
}

/// SVD of `B̂` with eigenvalues `λ̂_i = n σ_i²` sorted in descending order.
///
/// Each left vector is signed so that its largest-magnitude entry is
/// positive; the paired right vector flips with it.
pub fn iht_spectrum(f: &IhtFit) -> Result<IhtSpectrum> {
    let p = f.p();
    let nf = f.n as f64;
    if f.b_hat.iter().all(|&v| v == 0.0) {
        return Ok(IhtSpectrum {
            lambdas: DVector::zeros(p),
            left_vectors: DMatrix::identity(p, p),
            right_vectors: DMatrix::identity(p, p),
        });
    }
    let svd = f
        .b_hat
        .clone()
        .try_svd(true, true, f64::EPSILON, 0)
        .ok_or_else(|| IhtError::Numerical("SVD of B did not converge".into()))?;
    let u = svd.u.expect("requested U");
    let vt = svd.v_t.expect("requested V^T");
    let sv = svd.singular_values;

    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]));

    let mut lambdas = DVector::zeros(p);
    let mut left = DMatrix::zeros(p, p);
    let mut right = DMatrix::zeros(p, p);
    for (dst, &src) in order.iter().enumerate() {
        let mut uc = u.column(src).into_owned();
        let mut vc = vt.row(src).transpose();
        let pivot = uc.iamax();
        if uc[pivot] < 0.0 {
            uc.neg_mut();
            vc.neg_mut();
        }
        lambdas[dst] = nf * sv[src] * sv[src];
        left.set_column(dst, &uc);
        right.set_column(dst, &vc);
    }

    Ok(IhtSpectrum {
        lambdas,
        left_vectors: left,
        right_vectors: right,
    })
}

/// Orthonormal bases of the estimated left and right null spaces under the
/// hypothesis `rank(B) = j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullBases {
    pub j: usize,
    /// `p x (p-j)`, trailing left singular vectors.
    pub gamma0: DMatrix<f64>,
    /// `p x (p-j)`, trailing right singular vectors.
    pub psi0: DMatrix<f64>,
}

pub fn null_bases(spec: &IhtSpectrum, j: usize) -> Result<NullBases> {
    let p = spec.p();
    if j >= p {
        return Err(IhtError::OutOfRange { index: j, upper: p });
    }
    Ok(NullBases {
        j,
        gamma0: spec.left_vectors.columns(j, p - j).into_owned(),
        psi0: spec.right_vectors.columns(j, p - j).into_owned(),
    })
}
