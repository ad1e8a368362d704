//! Inputs shared by the benchmarks.

use iht::simulation::{generate, Model, SimConfig};
use iht::Dataset;

/// One replication of the curved two-direction model with `p` predictors.
pub fn curved_sample(n: usize, p: usize) -> Dataset {
    generate(&SimConfig::new(Model::Model22, n, p, 0.4, 1, 7), 0)
}

/// Decreasing weights `1, 1/2, …, 1/k`.
pub fn harmonic_weights(k: usize) -> Vec<f64> {
    (1..=k).map(|i| 1.0 / i as f64).collect()
}
