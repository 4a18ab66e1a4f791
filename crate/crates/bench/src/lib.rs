//! Fixtures shared by the criterion benches.

use phidiv::{Family, ModelSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Deterministic sample from a model.
pub fn fixture_sample(family: Family, theta: &[f64], n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ModelSpec::new(family).sample(theta, n, &mut rng).expect("valid fixture parameters")
}
