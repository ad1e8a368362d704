//! Data ingestion and the affine-invariant standardization of predictors and
//! response.
//!
//! All moments use divisor `n`. The predictor root is the unique symmetric
//! positive-definite inverse square root of the sample covariance, so two
//! datasets related by an affine map of the predictors standardize to
//! matrices that differ only by an orthogonal rotation.

use std::collections::HashSet;
use std::io::Read;
use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{IhtError, Result};

/// Default relative eigenvalue floor for [`inv_sqrt_spd`].
pub const DEFAULT_SINGULAR_TOL: f64 = 1e-12;

/// Raw predictors (rows are observations) and response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub column_names: Vec<String>,
    pub response_name: String,
}

impl Dataset {
    /// Builds a dataset, checking shapes, finiteness and `n >= p + 2`.
    pub fn new(
        x: DMatrix<f64>,
        y: DVector<f64>,
        column_names: Vec<String>,
        response_name: impl Into<String>,
    ) -> Result<Self> {
        let (n, p) = x.shape();
        if p == 0 {
            return Err(IhtError::InvalidData("no predictor columns".into()));
        }
        if y.len() != n {
            return Err(IhtError::InvalidData(format!(
                "response has {} entries but predictor matrix has {n} rows",
                y.len()
            )));
        }
        if column_names.len() != p {
            return Err(IhtError::InvalidData(format!(
                "{} column names for {p} predictors",
                column_names.len()
            )));
        }
        if n < p + 2 {
            return Err(IhtError::TooFewRows {
                n,
                p,
                required: p + 2,
            });
        }
        for (i, row) in x.row_iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(IhtError::Parse {
                        row: i + 1,
                        column: column_names[j].clone(),
                        message: format!("non-finite value {v}"),
                    });
                }
            }
        }
        let response_name = response_name.into();
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(IhtError::Parse {
                row: i + 1,
                column: response_name,
                message: format!("non-finite value {}", y[i]),
            });
        }
        Ok(Self {
            x,
            y,
            column_names,
            response_name,
        })
    }

    /// Builds a dataset with generated column names `x1..xp` and response `y`.
    pub fn from_matrix(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        let names = (1..=x.ncols()).map(|j| format!("x{j}")).collect();
        Self::new(x, y, names, "y")
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Replaces the named predictor columns by their natural logarithm.
    pub fn log_transform<S: AsRef<str>>(&mut self, columns: &[S]) -> Result<()> {
        for name in columns {
            let name = name.as_ref();
            let j = self
                .column_names
                .iter()
                .position(|c| c.eq_ignore_ascii_case(name))
                .ok_or_else(|| {
                    IhtError::InvalidArgument(format!("no predictor column '{name}'"))
                })?;
            for i in 0..self.n() {
                let v = self.x[(i, j)];
                if v <= 0.0 {
                    return Err(IhtError::InvalidData(format!(
                        "cannot take log of {v} in column '{}' row {}",
                        self.column_names[j],
                        i + 1
                    )));
                }
                self.x[(i, j)] = v.ln();
            }
        }
        Ok(())
    }
}

/// Reads a delimited table with a header row. The response column is
/// extracted by name; all remaining columns become predictors in file order.
pub fn load_dataset(path: impl AsRef<Path>, response: &str, delimiter: u8) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| IhtError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_dataset(file, response, delimiter)
}

/// Same as [`load_dataset`] but from any reader.
pub fn read_dataset<R: Read>(reader: R, response: &str, delimiter: u8) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| IhtError::Parse {
            row: 0,
            column: String::new(),
            message: e.to_string(),
        })?
        .iter()
        .map(str::to_owned)
        .collect();

    let mut seen = HashSet::new();
    for h in &headers {
        if !seen.insert(h.as_str()) {
            return Err(IhtError::DuplicateColumn(h.clone()));
        }
    }
    let resp_idx = headers
        .iter()
        .position(|h| h == response)
        .ok_or_else(|| IhtError::MissingResponse(response.to_owned()))?;

    let mut values: Vec<f64> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        let row = r + 1;
        let record = record.map_err(|e| IhtError::Parse {
            row,
            column: String::new(),
            message: e.to_string(),
        })?;
        if record.len() != headers.len() {
            return Err(IhtError::Parse {
                row,
                column: String::new(),
                message: format!("expected {} fields, found {}", headers.len(), record.len()),
            });
        }
        for (c, field) in record.iter().enumerate() {
            let parse_err = |message: String| IhtError::Parse {
                row,
                column: headers[c].clone(),
                message,
            };
            let v: f64 = field
                .parse()
                .map_err(|_| parse_err(format!("'{field}' is not a number")))?;
            if !v.is_finite() {
                return Err(parse_err(format!("non-finite value '{field}'")));
            }
            if c == resp_idx {
                ys.push(v);
            } else {
                values.push(v);
            }
        }
    }

    let n = ys.len();
    let p = headers.len() - 1;
    let names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|&(c, _)| c != resp_idx)
        .map(|(_, h)| h.clone())
        .collect();
    let x = DMatrix::from_row_slice(n, p, &values);
    Dataset::new(x, DVector::from_vec(ys), names, response)
}

/// Symmetric inverse square root of a symmetric positive-definite matrix.
///
/// Fails with [`IhtError::SingularCovariance`] when an eigenvalue is at or
/// below `tol` times the largest one.
pub fn inv_sqrt_spd(s: &DMatrix<f64>, tol: f64) -> Result<DMatrix<f64>> {
    let p = s.nrows();
    if s.ncols() != p {
        return Err(IhtError::InvalidArgument(format!(
            "expected a square matrix, got {}x{}",
            p,
            s.ncols()
        )));
    }
    let scale = s.norm().max(f64::MIN_POSITIVE);
    if (s - s.transpose()).norm() > 1e-10 * scale {
        return Err(IhtError::InvalidArgument("matrix is not symmetric".into()));
    }
    let sym = (s + s.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let max = eig.eigenvalues.max();
    let threshold = tol * max.max(0.0);
    for (index, &value) in eig.eigenvalues.iter().enumerate() {
        if value <= threshold || value <= 0.0 {
            return Err(IhtError::SingularCovariance {
                index,
                value,
                threshold,
            });
        }
    }
    let d = eig.eigenvalues.map(|v| 1.0 / v.sqrt());
    let v = &eig.eigenvectors;
    let r = v * DMatrix::from_diagonal(&d) * v.transpose();
    Ok((&r + r.transpose()) * 0.5)
}

/// Standardized predictors and response together with the transforms that
/// produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizedSample {
    /// `n x p`; rows are `Σ̂^{-1/2}(x_i - x̄)`.
    pub z_hat: DMatrix<f64>,
    pub y_hat: DVector<f64>,
    pub x_mean: DVector<f64>,
    /// Symmetric `Σ̂^{-1/2}` of the predictor sample covariance.
    pub sigma_inv_sqrt: DMatrix<f64>,
    pub y_mean: f64,
    pub y_sd: f64,
}

impl StandardizedSample {
    pub fn n(&self) -> usize {
        self.z_hat.nrows()
    }

    pub fn p(&self) -> usize {
        self.z_hat.ncols()
    }
}

/// Centers and whitens the predictors and centers and scales the response,
/// using divisor `n` throughout.
pub fn standardize(d: &Dataset) -> Result<StandardizedSample> {
    standardize_with_tol(d, DEFAULT_SINGULAR_TOL)
}

pub fn standardize_with_tol(d: &Dataset, tol: f64) -> Result<StandardizedSample> {
    let n = d.n();
    let nf = n as f64;

    for (j, col) in d.x.column_iter().enumerate() {
        let first = col[0];
        if col.iter().all(|&v| v == first) {
            return Err(IhtError::ConstantPredictor(d.column_names[j].clone()));
        }
    }
    let y0 = d.y[0];
    if d.y.iter().all(|&v| v == y0) {
        return Err(IhtError::ZeroResponseVariance);
    }

    let x_mean: DVector<f64> = d.x.row_mean().transpose();
    let mut centered = d.x.clone();
    for mut row in centered.row_iter_mut() {
        row -= x_mean.transpose();
    }
    let cov = centered.transpose() * &centered / nf;
    let sigma_inv_sqrt = inv_sqrt_spd(&cov, tol)?;
    let z_hat = centered * &sigma_inv_sqrt;

    let y_mean = d.y.mean();
    let yc = d.y.map(|v| v - y_mean);
    let var = yc.norm_squared() / nf;
    if var <= 0.0 || !var.is_finite() {
        return Err(IhtError::ZeroResponseVariance);
    }
    let y_sd = var.sqrt();
    let y_hat = yc / y_sd;

    Ok(StandardizedSample {
        z_hat,
        y_hat,
        x_mean,
        sigma_inv_sqrt,
        y_mean,
        y_sd,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_data(n: usize, p: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = DVector::from_fn(n, |i, _| x[(i, 0)] + rng.sample::<f64, _>(StandardNormal));
        Dataset::from_matrix(x, y).unwrap()
    }

    #[test]
    fn identity_root() {
        let r = inv_sqrt_spd(&DMatrix::identity(4, 4), DEFAULT_SINGULAR_TOL).unwrap();
        assert!((r - DMatrix::<f64>::identity(4, 4)).norm() < 1e-14);
    }

    #[test]
    fn diagonal_root() {
        let s = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 9.0]));
        let r = inv_sqrt_spd(&s, DEFAULT_SINGULAR_TOL).unwrap();
        let want = DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, 1.0 / 3.0]));
        assert!((r - want).norm() < 1e-14);
    }

    #[test]
    fn two_by_two_matches_spectral_formula() {
        // [[2,1],[1,2]] has eigenpairs 3 -> (1,1)/√2 and 1 -> (1,-1)/√2, so
        // R = ½[[a+b, a-b],[a-b, a+b]] with a = 3^{-1/2}, b = 1.
        let s = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let a = 1.0 / 3f64.sqrt();
        let b = 1.0;
        let want = DMatrix::from_row_slice(2, 2, &[a + b, a - b, a - b, a + b]) * 0.5;
        let r = inv_sqrt_spd(&s, DEFAULT_SINGULAR_TOL).unwrap();
        assert!((&r - want).norm() < 1e-14);
        let rsr = &r * &s * &r;
        assert!((rsr - DMatrix::<f64>::identity(2, 2)).norm() < 1e-12);
    }

    #[test]
    fn singular_root_reports_eigenvalue() {
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        match inv_sqrt_spd(&s, DEFAULT_SINGULAR_TOL) {
            Err(IhtError::SingularCovariance { index, value, .. }) => {
                assert!(index < 2);
                assert!(value.abs() < 1e-12);
            }
            other => panic!("expected singular covariance, got {other:?}"),
        }
    }

    #[test]
    fn nonsymmetric_rejected() {
        let s = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 0.0, 2.0]);
        assert!(matches!(
            inv_sqrt_spd(&s, DEFAULT_SINGULAR_TOL),
            Err(IhtError::InvalidArgument(_))
        ));
    }

    #[test]
    fn whitened_input_is_fixed_point() {
        let d = random_data(60, 3, 7);
        let s = standardize(&d).unwrap();
        let d2 = Dataset::from_matrix(s.z_hat.clone(), s.y_hat.clone()).unwrap();
        let s2 = standardize(&d2).unwrap();
        assert!((&s2.z_hat - &s.z_hat).norm() < 1e-8);
        assert!((&s2.y_hat - &s.y_hat).norm() < 1e-8);
        assert!((s2.sigma_inv_sqrt - DMatrix::<f64>::identity(3, 3)).norm() < 1e-8);
    }

    #[test]
    fn moments_of_standardized_sample() {
        let d = random_data(200, 5, 11);
        let s = standardize(&d).unwrap();
        let n = s.n() as f64;
        // Direct recomputation of the moments.
        for j in 0..s.p() {
            let m: f64 = s.z_hat.column(j).iter().sum::<f64>() / n;
            assert!(m.abs() < 1e-10 * (s.p() as f64).sqrt(), "col {j} mean {m}");
        }
        let gram = s.z_hat.transpose() * &s.z_hat / n;
        assert!((gram - DMatrix::<f64>::identity(5, 5)).norm() < 1e-8);
        assert!(s.y_hat.mean().abs() < 1e-10);
        assert!((s.y_hat.norm_squared() / n - 1.0).abs() < 1e-10);
    }

    #[test]
    fn constant_response_rejected() {
        let mut d = random_data(20, 2, 3);
        d.y.fill(4.0);
        assert!(matches!(
            standardize(&d),
            Err(IhtError::ZeroResponseVariance)
        ));
    }

    #[test]
    fn constant_predictor_named() {
        let mut d = random_data(20, 3, 3);
        d.x.column_mut(1).fill(2.5);
        match standardize(&d) {
            Err(IhtError::ConstantPredictor(name)) => assert_eq!(name, "x2"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn too_few_rows() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 7.0]);
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let err = Dataset::from_matrix(x, y).unwrap_err();
        assert!(err.to_string().contains("n < p + 2"), "{err}");
    }

    #[test]
    fn csv_parse_and_errors() {
        let text = "a,y,b\n1,2,3\n4,5,6.5\n7,8,9\n10,11,13\n";
        let d = read_dataset(text.as_bytes(), "y", b',').unwrap();
        assert_eq!(d.column_names, vec!["a", "b"]);
        assert_eq!(d.y.as_slice(), &[2.0, 5.0, 8.0, 11.0]);
        assert_eq!(d.x[(1, 1)], 6.5);

        let bad = "a,y,b\n1,2,3\n4,NaN,6\n7,8,9\n10,11,12\n";
        match read_dataset(bad.as_bytes(), "y", b',') {
            Err(IhtError::Parse { row, column, .. }) => {
                assert_eq!(row, 2);
                assert_eq!(column, "y");
            }
            other => panic!("{other:?}"),
        }
        let word = "a,y\n1,2\nfoo,3\n4,5\n";
        assert!(matches!(
            read_dataset(word.as_bytes(), "y", b','),
            Err(IhtError::Parse { row: 2, .. })
        ));
        assert!(matches!(
            read_dataset(text.as_bytes(), "z", b','),
            Err(IhtError::MissingResponse(_))
        ));
        let dup = "a,y,a\n1,2,3\n";
        assert!(matches!(
            read_dataset(dup.as_bytes(), "y", b','),
            Err(IhtError::DuplicateColumn(_))
        ));
        let semi = "a;y\n1;2\n2;3\n4;4\n";
        assert_eq!(read_dataset(semi.as_bytes(), "y", b';').unwrap().n(), 3);
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(
            load_dataset("/definitely/not/here.csv", "y", b','),
            Err(IhtError::Io { .. })
        ));
    }

    #[test]
    fn log_columns() {
        let mut d = random_data(10, 2, 1);
        d.x.column_mut(1)
            .iter_mut()
            .for_each(|v| *v = v.abs() + 1.0);
        let before = d.x[(3, 1)];
        d.log_transform(&["X2"]).unwrap();
        assert_eq!(d.x[(3, 1)], before.ln());
        d.x[(0, 0)] = -1.0;
        assert!(matches!(
            d.log_transform(&["x1"]),
            Err(IhtError::InvalidData(_))
        ));
        assert!(matches!(
            d.log_transform(&["nope"]),
            Err(IhtError::InvalidArgument(_))
        ));
    }

    fn random_spd(p: usize, cond: f64, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::from_fn(p, p, |_, _| rng.sample::<f64, _>(StandardNormal));
        let q = a.qr().q();
        let d = DVector::from_fn(p, |i, _| {
            if p == 1 {
                1.0
            } else {
                cond.powf(i as f64 / (p - 1) as f64)
            }
        });
        &q * DMatrix::from_diagonal(&d) * q.transpose()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn inv_sqrt_whitens(p in 1usize..8, log_cond in 0.0f64..6.0, seed in any::<u64>()) {
            let s = random_spd(p, 10f64.powf(log_cond), seed);
            let r = inv_sqrt_spd(&s, DEFAULT_SINGULAR_TOL).unwrap();
            let rsr = &r * &s * &r;
            prop_assert!((rsr - DMatrix::<f64>::identity(p, p)).norm() < 1e-10 * p as f64);
            prop_assert!((&r - r.transpose()).norm() == 0.0);
        }

        #[test]
        fn affine_equivariance(seed in any::<u64>(), c in prop_oneof![-3.0f64..-0.2, 0.2f64..3.0], d in -5.0f64..5.0) {
            let data = random_data(40, 3, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
            let a = DMatrix::from_fn(3, 3, |i, j| rng.sample::<f64, _>(StandardNormal) + if i == j { 2.0 } else { 0.0 });
            prop_assume!(a.determinant().abs() > 0.1);
            let b = DVector::from_fn(3, |_, _| rng.sample::<f64, _>(StandardNormal));
            let mut x2 = &data.x * a.transpose();
            for mut row in x2.row_iter_mut() { row += b.transpose(); }
            let y2 = data.y.map(|v| c * v + d);
            let t = Dataset::from_matrix(x2, y2).unwrap();
            let s1 = standardize(&data).unwrap();
            let s2 = standardize(&t).unwrap();
            let g1 = &s1.z_hat * s1.z_hat.transpose();
            let g2 = &s2.z_hat * s2.z_hat.transpose();
            prop_assert!((g1 - g2).norm() < 1e-8);
            let sign = c.signum();
            prop_assert!((&s1.y_hat * sign - &s2.y_hat).norm() < 1e-8);
        }
    }
}
