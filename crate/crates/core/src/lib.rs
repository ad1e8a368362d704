//! Invariant iterative Hessian transformation (IHT) for the central mean
//! subspace: the `B̂` matrix and its spectrum, chi-squared and weighted
//! chi-squared tests of its rank, sequential dimension estimation,
//! recovered directions, and the Monte Carlo studies.
//!
//! ```
//! use iht::{estimate_dimension, Dataset, Reference};
//! use nalgebra::{DMatrix, DVector};
//!
//! let x = DMatrix::from_fn(60, 3, |i, j| ((i * 7 + j * 13) % 11) as f64 + (i * j) as f64 * 0.01);
//! let y = DVector::from_fn(60, |i, _| x[(i, 0)] + 0.1 * x[(i, 1)].powi(2));
//! let d = Dataset::from_matrix(x, y).unwrap();
//! let est = estimate_dimension(&d, 0.05, Reference::Chisq).unwrap();
//! assert!(est.k_hat <= 3);
//! ```

pub mod chisq;
pub mod dimension;
pub mod error;
pub mod fit;
pub mod inference;
mod quadrature;
pub mod report;
pub mod simulation;
pub mod standardize;

pub use chisq::{chisq_sf, mixture_sf, MixtureSpec};
pub use dimension::{run_test, Reference, TestResult};
pub use error::{IhtError, Result};
pub use fit::{fit_iht, iht_spectrum, null_bases, IhtFit, IhtSpectrum, NullBases};
pub use inference::{directions, estimate_dimension, Analysis, DimensionEstimate};
pub use report::{build_report, Report};
pub use simulation::{Model, SimConfig, Study, StudyKind};
pub use standardize::{load_dataset, standardize, Dataset, StandardizedSample};
