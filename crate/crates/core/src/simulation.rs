//! Monte Carlo drivers for the level, dimension-estimate and direction
//! studies.
//!
//! Replication `r` of a configuration draws from `ChaCha8Rng` seeded with
//! the master seed and switched to stream `r`, so results never depend on
//! how replications are scheduled across threads.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dimension::Reference;
use crate::error::{IhtError, Result};
use crate::inference::Analysis;
use crate::standardize::Dataset;

/// Nominal levels of the level tables.
pub const DEFAULT_ALPHAS: [f64; 4] = [0.01, 0.05, 0.10, 0.15];

/// Levels of the dimension-estimate table.
pub const KHAT_ALPHAS: [f64; 5] = [0.001, 0.01, 0.05, 0.10, 0.15];

/// Generating model for the response. Predictors are always iid `N(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    /// `Y ~ N(0, 1)` independent of `Z`; `sigma` is ignored.
    Null,
    /// `Y = Z₁ + 0.2(Z₁ + Z₂)² + σ N(0, 1)`.
    Model22,
    /// `Y = Z₁ + 0.2(Z₁ + Z₂)² + 0.5(χ²₂ − 2)`; `sigma` is ignored.
    Model22ChisqErr,
    /// `Y = exp(0.3(2Z₁ + 3Z₂)) + 1.6 sin(Z₁ − Z₂) + σ N(0, 1)`, `p = 5`.
    Model23,
}

impl Model {
    /// Dimension of the IHT subspace under the model.
    pub fn true_k(self) -> usize {
        match self {
            Model::Null => 0,
            _ => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Model::Null => "null",
            Model::Model22 => "model22",
            Model::Model22ChisqErr => "model22_chisq_err",
            Model::Model23 => "model23",
        }
    }
}

impl std::str::FromStr for Model {
    type Err = IhtError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "null" => Ok(Model::Null),
            "model22" => Ok(Model::Model22),
            "model22_chisq_err" => Ok(Model::Model22ChisqErr),
            "model23" => Ok(Model::Model23),
            other => Err(IhtError::InvalidArgument(format!(
                "unknown model '{other}'"
            ))),
        }
    }
}

fn default_alphas() -> Vec<f64> {
    DEFAULT_ALPHAS.to_vec()
}

/// One cell of a simulation grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub model: Model,
    pub n: usize,
    pub p: usize,
    #[serde(default)]
    pub sigma: f64,
    pub reps: usize,
    pub seed: u64,
    #[serde(default = "default_alphas")]
    pub alphas: Vec<f64>,
    /// Hypothesis studied by `level_study`; defaults to the true `k`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub j_test: Option<usize>,
}

impl SimConfig {
    pub fn new(model: Model, n: usize, p: usize, sigma: f64, reps: usize, seed: u64) -> Self {
        SimConfig {
            model,
            n,
            p,
            sigma,
            reps,
            seed,
            alphas: default_alphas(),
            j_test: None,
        }
    }

    pub fn j_test(&self) -> usize {
        self.j_test.unwrap_or_else(|| self.model.true_k())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(IhtError::InvalidArgument(m));
        if self.reps == 0 {
            return bad("reps must be at least 1".into());
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return bad(format!(
                "sigma must be finite and nonnegative, got {}",
                self.sigma
            ));
        }
        if self.p == 0 {
            return bad("p must be at least 1".into());
        }
        match self.model {
            Model::Model22 | Model::Model22ChisqErr if self.p < 2 => {
                return bad(format!("{} needs p >= 2", self.model.name()))
            }
            Model::Model23 if self.p != 5 => return bad("model23 fixes p = 5".into()),
            _ => {}
        }
        if self.n < self.p + 2 {
            return Err(IhtError::TooFewRows {
                n: self.n,
                p: self.p,
                required: self.p + 2,
            });
        }
        if self.alphas.is_empty() || self.alphas.iter().any(|&a| !(a > 0.0 && a <= 1.0)) {
            return bad(format!(
                "alphas must be nonempty and in (0, 1], got {:?}",
                self.alphas
            ));
        }
        if self.j_test() >= self.p {
            return Err(IhtError::OutOfRange {
                index: self.j_test(),
                upper: self.p,
            });
        }
        Ok(())
    }

    fn rng(&self, rep: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(rep as u64);
        rng
    }
}

/// The dataset of replication `rep`. Identical `(cfg, rep)` give
/// bit-identical data.
pub fn generate(cfg: &SimConfig, rep: usize) -> Dataset {
    let mut rng = cfg.rng(rep);
    let (n, p) = (cfg.n, cfg.p);
    let mut z = Vec::with_capacity(n * p);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let start = z.len();
        for _ in 0..p {
            z.push(rng.sample::<f64, _>(StandardNormal));
        }
        let row = &z[start..];
        let mut normal = || rng.sample::<f64, _>(StandardNormal);
        let value = match cfg.model {
            Model::Null => normal(),
            Model::Model22 => mean22(row) + cfg.sigma * normal(),
            Model::Model22ChisqErr => {
                let chi2 = normal().powi(2) + normal().powi(2);
                mean22(row) + 0.5 * (chi2 - 2.0)
            }
            Model::Model23 => {
                let (z1, z2) = (row[0], row[1]);
                (0.3 * (2.0 * z1 + 3.0 * z2)).exp() + 1.6 * (z1 - z2).sin() + cfg.sigma * normal()
            }
        };
        y.push(value);
    }
    let x = DMatrix::from_row_slice(n, p, &z);
    let column_names = (1..=p).map(|j| format!("z{j}")).collect();
    Dataset::new(x, DVector::from_vec(y), column_names, "y")
        .expect("generated data are finite and n >= p + 2")
}

fn mean22(z: &[f64]) -> f64 {
    z[0] + 0.2 * (z[0] + z[1]).powi(2)
}

/// Monte Carlo standard error, in percentage points, of a rate `r` percent
/// estimated from `reps` replications.
pub fn level_se(rate_pct: f64, reps: usize) -> f64 {
    (rate_pct * (100.0 - rate_pct) / reps as f64).sqrt()
}

/// Rejection rate of one (reference, alpha) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelEntry {
    pub reference: Reference,
    pub alpha: f64,
    pub rejections: usize,
    pub rate_pct: f64,
    pub se_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelTable {
    pub config: SimConfig,
    pub j: usize,
    /// Replications that produced p-values; rates are out of this count.
    pub completed: usize,
    pub failures: usize,
    pub entries: Vec<LevelEntry>,
}

impl LevelTable {
    pub fn rate(&self, reference: Reference, alpha: f64) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| e.reference == reference && e.alpha == alpha)
            .map(|e| e.rate_pct)
    }

    pub fn rates(&self, reference: Reference) -> Vec<f64> {
        self.entries
            .iter()
            .filter(|e| e.reference == reference)
            .map(|e| e.rate_pct)
            .collect()
    }
}

fn run_reps<T: Send>(cfg: &SimConfig, f: impl Fn(Dataset) -> Result<T> + Sync) -> Vec<Result<T>> {
    (0..cfg.reps)
        .into_par_iter()
        .map(|rep| f(generate(cfg, rep)))
        .collect()
}

/// Rejection rates of `T_j` at `j = cfg.j_test()`, with both references
/// evaluated on the same replication.
pub fn level_study(cfg: &SimConfig) -> Result<LevelTable> {
    cfg.validate()?;
    let j = cfg.j_test();
    let results = run_reps(cfg, |d| {
        let r = Analysis::new(&d)?.test(j, Reference::Both)?;
        Ok((r.p_chisq.unwrap_or(1.0), r.p_weighted.unwrap_or(1.0)))
    });
    let pvals: Vec<(f64, f64)> = results.into_iter().filter_map(|r| r.ok()).collect();
    let completed = pvals.len();
    let mut entries = Vec::new();
    for reference in [Reference::Chisq, Reference::Weighted] {
        for &alpha in &cfg.alphas {
            let rejections = pvals
                .iter()
                .filter(|(c, w)| {
                    let p = if reference == Reference::Chisq {
                        *c
                    } else {
                        *w
                    };
                    p <= alpha
                })
                .count();
            let rate_pct = if completed == 0 {
                f64::NAN
            } else {
                100.0 * rejections as f64 / completed as f64
            };
            entries.push(LevelEntry {
                reference,
                alpha,
                rejections,
                rate_pct,
                se_pct: level_se(rate_pct, completed),
            });
        }
    }
    Ok(LevelTable {
        config: cfg.clone(),
        j,
        completed,
        failures: cfg.reps - completed,
        entries,
    })
}

/// Largest bucket of the dimension-estimate table; it collects every
/// `k̂ >= KHAT_CAP`.
pub const KHAT_CAP: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KhatEntry {
    pub reference: Reference,
    pub alpha: f64,
    /// Counts for `k̂ = 0, 1, …, KHAT_CAP - 1` and `k̂ >= KHAT_CAP`.
    pub counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KhatTable {
    pub config: SimConfig,
    pub completed: usize,
    pub failures: usize,
    pub entries: Vec<KhatEntry>,
}

impl KhatTable {
    pub fn counts(&self, reference: Reference, alpha: f64) -> Option<&[usize]> {
        self.entries
            .iter()
            .find(|e| e.reference == reference && e.alpha == alpha)
            .map(|e| e.counts.as_slice())
    }
}

/// Distribution of the sequential estimate `k̂` for every level in `alphas`
/// and both references. Tests beyond `j = KHAT_CAP - 1` are never needed.
pub fn khat_study(cfg: &SimConfig, alphas: &[f64]) -> Result<KhatTable> {
    cfg.validate()?;
    if alphas.is_empty() || alphas.iter().any(|&a| !(a > 0.0 && a <= 1.0)) {
        return Err(IhtError::InvalidArgument(format!(
            "alphas must lie in (0, 1], got {alphas:?}"
        )));
    }
    let amax = alphas.iter().copied().fold(0.0, f64::max);
    let last_j = cfg.p.min(KHAT_CAP) - 1;
    let results = run_reps(cfg, |d| {
        let a = Analysis::new(&d)?;
        let mut pvals = Vec::new();
        for j in 0..=last_j {
            let r = a.test(j, Reference::Both)?;
            let (c, w) = (r.p_chisq.unwrap_or(1.0), r.p_weighted.unwrap_or(1.0));
            pvals.push((c, w));
            if c > amax && w > amax {
                break;
            }
        }
        Ok(pvals)
    });
    let trails: Vec<Vec<(f64, f64)>> = results.into_iter().filter_map(|r| r.ok()).collect();
    let completed = trails.len();
    let mut entries = Vec::new();
    for reference in [Reference::Chisq, Reference::Weighted] {
        for &alpha in alphas {
            let mut counts = vec![0usize; KHAT_CAP + 1];
            for t in &trails {
                let k = t
                    .iter()
                    .position(|(c, w)| {
                        (if reference == Reference::Chisq {
                            *c
                        } else {
                            *w
                        }) > alpha
                    })
                    .unwrap_or(cfg.p);
                counts[k.min(KHAT_CAP)] += 1;
            }
            entries.push(KhatEntry {
                reference,
                alpha,
                counts,
            });
        }
    }
    Ok(KhatTable {
        config: cfg.clone(),
        completed,
        failures: cfg.reps - completed,
        entries,
    })
}

/// Empirical quantile with linear interpolation between order statistics
/// (`h = (n − 1)q`). `sorted` must be ascending and nonempty.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty sample");
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// `|corr(target, fitted)|` where `fitted` is the OLS fit, with intercept,
/// of `target` on the columns of `predictors`.
pub fn abs_corr_with_fit(target: &DVector<f64>, predictors: &DMatrix<f64>) -> Result<f64> {
    let n = target.len();
    let mut design = DMatrix::from_element(n, predictors.ncols() + 1, 1.0);
    design
        .columns_mut(1, predictors.ncols())
        .copy_from(predictors);
    let coef = design
        .clone()
        .svd(true, true)
        .solve(target, 1e-12)
        .map_err(|e| IhtError::Numerical(e.to_string()))?;
    let fitted = &design * coef;
    let (mt, mf) = (target.mean(), fitted.mean());
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let (a, b) = (target[i] - mt, fitted[i] - mf);
        sxy += a * b;
        sxx += a * a;
        syy += b * b;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(0.0);
    }
    Ok((sxy / (sxx * syy).sqrt()).abs())
}

/// `|corr|` of each of the first `targets` raw predictors with its fit on
/// the leading `k` IHT predictors `v̂ⱼᵀẐ`.
pub fn recovery_correlations(d: &Dataset, k: usize, targets: usize) -> Result<Vec<f64>> {
    let a = Analysis::new(d)?;
    let v = a.spectrum.left_vectors.columns(0, k);
    let preds = &a.sample.z_hat * v;
    (0..targets)
        .map(|j| abs_corr_with_fit(&d.x.column(j).into_owned(), &preds))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionEntry {
    /// 1-based predictor index.
    pub target: usize,
    pub q05: f64,
    pub q50: f64,
    pub q95: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionTable {
    pub config: SimConfig,
    pub k: usize,
    pub completed: usize,
    pub failures: usize,
    pub entries: Vec<DirectionEntry>,
}

/// Quantiles of `|corr(Z_j, fitted)|`, `j = 1, 2`, with `k = 2` directions.
pub fn direction_accuracy(cfg: &SimConfig) -> Result<DirectionTable> {
    cfg.validate()?;
    if cfg.p < 2 {
        return Err(IhtError::InvalidArgument(
            "direction study needs p >= 2".into(),
        ));
    }
    let (k, targets) = (2, 2);
    let results = run_reps(cfg, |d| recovery_correlations(&d, k, targets));
    let rows: Vec<Vec<f64>> = results.into_iter().filter_map(|r| r.ok()).collect();
    let completed = rows.len();
    let entries = if completed == 0 {
        Vec::new()
    } else {
        (0..targets)
            .map(|t| {
                let mut v: Vec<f64> = rows.iter().map(|r| r[t]).collect();
                v.sort_by(f64::total_cmp);
                DirectionEntry {
                    target: t + 1,
                    q05: quantile(&v, 0.05),
                    q50: quantile(&v, 0.5),
                    q95: quantile(&v, 0.95),
                }
            })
            .collect()
    };
    Ok(DirectionTable {
        config: cfg.clone(),
        k,
        completed,
        failures: cfg.reps - completed,
        entries,
    })
}

/// What a study computes for each of its configurations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyKind {
    Level,
    Khat,
    Direction,
}

/// A named grid of configurations, as read from a TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Study {
    pub name: String,
    pub kind: StudyKind,
    #[serde(rename = "run")]
    pub runs: Vec<SimConfig>,
}

impl Study {
    pub fn from_toml(text: &str) -> Result<Study> {
        let s: Study =
            toml::from_str(text).map_err(|e| IhtError::InvalidArgument(e.to_string()))?;
        if s.runs.is_empty() {
            return Err(IhtError::InvalidArgument(
                "study has no [[run]] entries".into(),
            ));
        }
        for r in &s.runs {
            r.validate()?;
        }
        Ok(s)
    }

    pub fn with_reps(mut self, reps: usize) -> Self {
        for r in &mut self.runs {
            r.reps = reps;
        }
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        for r in &mut self.runs {
            r.seed = seed;
        }
        self
    }
}

/// The grid behind table `table` (1 to 7), with `reps` replications per
/// cell and master seed `seed`.
pub fn preset(table: u8, reps: usize, seed: u64) -> Result<Study> {
    let cell = |model, n, p, sigma| SimConfig::new(model, n, p, sigma, reps, seed);
    let (name, kind, runs) = match table {
        1 => (
            "table1",
            StudyKind::Level,
            [25, 50, 100, 200]
                .map(|n| cell(Model::Null, n, 4, 0.0))
                .to_vec(),
        ),
        2 => {
            let mut runs: Vec<SimConfig> = [0.0, 0.2, 0.4, 0.8, 1.6]
                .map(|s| cell(Model::Model22, 50, 4, s))
                .to_vec();
            runs.extend([100, 200, 400].map(|n| cell(Model::Model22, n, 4, 1.6)));
            ("table2", StudyKind::Level, runs)
        }
        3 => (
            "table3",
            StudyKind::Level,
            [4, 6, 8, 12, 16]
                .map(|p| cell(Model::Model22, 100, p, 0.2))
                .to_vec(),
        ),
        4 => (
            "table4",
            StudyKind::Level,
            [50, 100, 200]
                .map(|n| cell(Model::Model22ChisqErr, n, 4, 0.0))
                .to_vec(),
        ),
        5 => (
            "table5",
            StudyKind::Level,
            [50, 100, 200]
                .map(|n| cell(Model::Model23, n, 5, 0.2))
                .to_vec(),
        ),
        6 => {
            let runs = [50, 100]
                .map(|n| SimConfig {
                    alphas: KHAT_ALPHAS.to_vec(),
                    ..cell(Model::Model22, n, 4, 0.4)
                })
                .to_vec();
            ("table6", StudyKind::Khat, runs)
        }
        7 => {
            let mut runs = Vec::new();
            for n in [50, 100] {
                for s in [0.2, 0.4, 0.8] {
                    runs.push(cell(Model::Model22, n, 4, s));
                }
            }
            ("table7", StudyKind::Direction, runs)
        }
        other => {
            return Err(IhtError::InvalidArgument(format!(
                "no preset for table {other}; choose 1 to 7"
            )))
        }
    };
    Ok(Study {
        name: name.into(),
        kind,
        runs,
    })
}

/// One flat output row; the column set depends on the study kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Row {
    Level(LevelRow),
    Khat(KhatRow),
    Direction(DirectionRow),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelRow {
    pub model: Model,
    pub n: usize,
    pub p: usize,
    pub sigma: f64,
    pub j: usize,
    pub reference: Reference,
    pub alpha: f64,
    pub rate_pct: f64,
    pub se_pct: f64,
    pub completed: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KhatRow {
    pub model: Model,
    pub n: usize,
    pub p: usize,
    pub sigma: f64,
    pub reference: Reference,
    pub alpha: f64,
    pub k0: usize,
    pub k1: usize,
    pub k2: usize,
    pub k3_plus: usize,
    pub completed: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionRow {
    pub model: Model,
    pub n: usize,
    pub p: usize,
    pub sigma: f64,
    pub target: String,
    pub q05: f64,
    pub q50: f64,
    pub q95: f64,
    pub completed: usize,
    pub failures: usize,
}

/// Results of a whole study, ready to serialize.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyOutput {
    pub name: String,
    pub kind: StudyKind,
    pub rows: Vec<Row>,
}

pub fn run_study(study: &Study) -> Result<StudyOutput> {
    let mut rows = Vec::new();
    for cfg in &study.runs {
        match study.kind {
            StudyKind::Level => {
                let t = level_study(cfg)?;
                rows.extend(t.entries.iter().map(|e| {
                    Row::Level(LevelRow {
                        model: cfg.model,
                        n: cfg.n,
                        p: cfg.p,
                        sigma: cfg.sigma,
                        j: t.j,
                        reference: e.reference,
                        alpha: e.alpha,
                        rate_pct: e.rate_pct,
                        se_pct: e.se_pct,
                        completed: t.completed,
                        failures: t.failures,
                    })
                }));
            }
            StudyKind::Khat => {
                let t = khat_study(cfg, &cfg.alphas)?;
                rows.extend(t.entries.iter().map(|e| {
                    Row::Khat(KhatRow {
                        model: cfg.model,
                        n: cfg.n,
                        p: cfg.p,
                        sigma: cfg.sigma,
                        reference: e.reference,
                        alpha: e.alpha,
                        k0: e.counts[0],
                        k1: e.counts[1],
                        k2: e.counts[2],
                        k3_plus: e.counts[3],
                        completed: t.completed,
                        failures: t.failures,
                    })
                }));
            }
            StudyKind::Direction => {
                let t = direction_accuracy(cfg)?;
                rows.extend(t.entries.iter().map(|e| {
                    Row::Direction(DirectionRow {
                        model: cfg.model,
                        n: cfg.n,
                        p: cfg.p,
                        sigma: cfg.sigma,
                        target: format!("Z{}", e.target),
                        q05: e.q05,
                        q50: e.q50,
                        q95: e.q95,
                        completed: t.completed,
                        failures: t.failures,
                    })
                }));
            }
        }
    }
    Ok(StudyOutput {
        name: study.name.clone(),
        kind: study.kind,
        rows,
    })
}

impl StudyOutput {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let err = |e: csv::Error| IhtError::Numerical(format!("csv output: {e}"));
        for row in &self.rows {
            match row {
                Row::Level(r) => out.serialize(r),
                Row::Khat(r) => out.serialize(r),
                Row::Direction(r) => out.serialize(r),
            }
            .map_err(err)?;
        }
        out.flush().map_err(|e| IhtError::Io {
            path: "<csv output>".into(),
            source: e,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("study output serializes")
    }
}
