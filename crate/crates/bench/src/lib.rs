//! Shared fixtures for the benches.

use floodrisk_core::synthetic::generate;
use floodrisk_core::{FeatureBundle, Scenario, ScenarioConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// The `small` scenario with a fixed seed.
pub fn small_scenario() -> Scenario {
    generate(&ScenarioConfig::profile("small", 1).expect("profile")).expect("scenario")
}

pub fn small_features(s: &Scenario) -> FeatureBundle {
    FeatureBundle::compute(&s.portfolio, &s.grid, Some(&s.layers), &Default::default()).expect("features")
}

/// `n` uniform values in `[0, scale)`.
pub fn uniform(n: usize, scale: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random::<f64>() * scale).collect()
}

/// Bernoulli draws with probabilities `p`.
pub fn bernoulli(p: &[f64], seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    p.iter().map(|&q| f64::from(u8::from(rng.random::<f64>() < q))).collect()
}
