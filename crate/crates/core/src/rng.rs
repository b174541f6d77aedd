//! Seeded randomness. Every stochastic routine in the crate takes either a
//! `u64` seed or an explicit `Rng`, so a (config, seed) pair fixes all bytes
//! a run emits.

pub use rand::Rng as RngExt;
use rand::SeedableRng;

/// The one generator used everywhere; a fixed algorithm keeps streams stable
/// across platforms and releases.
pub type Rng = rand_chacha::ChaCha8Rng;

pub fn rng_from(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

/// Derive an independent stream for a named sub-task of a run.
pub fn derive_seed(root: u64, tag: &str) -> u64 {
    // FNV-1a over the tag, then a splitmix64 finalizer over the combination.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in tag.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x1000_0000_01b3);
    }
    let mut z = root ^ h.rotate_left(17);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_seeds_are_stable_and_distinct() {
        let a = derive_seed(17, "patchset");
        let b = derive_seed(17, "patchset");
        let c = derive_seed(17, "epoch-order");
        let d = derive_seed(18, "patchset");
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }

    #[test]
    fn streams_replay() {
        let mut r1 = rng_from(7);
        let mut r2 = rng_from(7);
        let xs: Vec<f64> = (0..8).map(|_| r1.gen_range(0.0..1.0)).collect();
        let ys: Vec<f64> = (0..8).map(|_| r2.gen_range(0.0..1.0)).collect();
        assert_eq!(xs, ys);
    }
}
