//! Shared fixtures for the benchmarks.

use asugs::data::generate_grid_mixture;
use asugs::rng::{stream, Purpose};
use asugs::{EngineConfig, PriorConfig};

/// `n` rows from the 4 x 4 grid of Gaussians with variance 0.025.
pub fn grid_stream(n: usize, seed: u64) -> Vec<Vec<f64>> {
    let truth = generate_grid_mixture(4, 0.025, 1.0).expect("valid grid");
    truth
        .sample(n, &mut stream(seed, Purpose::TrainData, 0))
        .rows
}

/// Adaptive config with prune / merge, tuned to the grid's scale.
pub fn grid_config(seed: u64) -> EngineConfig {
    EngineConfig::asugs_pm(2)
        .with_prior(PriorConfig::isotropic(2, 0.01, 20.0, 0.04))
        .with_seed(seed)
}
