//! Seeded input builders shared by the criterion benches.

use padlab_core::rng::RngExt;
use padlab_core::{rng_from, Tensor};

/// Uniform [0, 1) tensor with a fixed seed, so every bench run measures the
/// same arithmetic.
pub fn uniform_tensor(n: usize, c: usize, h: usize, w: usize, seed: u64) -> Tensor {
    let mut rng = rng_from(seed);
    Tensor::from_fn(n, c, h, w, |_, _, _, _| rng.gen_range(0.0..1.0))
}

pub fn uniform_vec(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = rng_from(seed);
    (0..len).map(|_| rng.gen_range(0.0..1.0)).collect()
}

pub fn random_labels(len: usize, classes: usize, seed: u64) -> Vec<usize> {
    let mut rng = rng_from(seed);
    (0..len).map(|_| rng.gen_range(0..classes)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builders_are_seed_deterministic() {
        assert_eq!(
            uniform_tensor(1, 2, 3, 3, 7),
            uniform_tensor(1, 2, 3, 3, 7),
            "same seed must rebuild the same tensor"
        );
        assert_ne!(
            uniform_vec(8, 1),
            uniform_vec(8, 2),
            "different seeds must give different inputs"
        );
        let labels = random_labels(64, 5, 3);
        assert!(labels.iter().all(|&l| l < 5), "labels must stay inside the class range");
    }
}
