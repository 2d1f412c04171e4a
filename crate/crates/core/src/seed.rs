//! Deterministic seed derivation for parallel work.
//!
//! Every parallel unit (tree, replicate, participant) gets its own RNG seeded
//! from `(base seed, stream, index)`, so results never depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finaliser.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed for unit `index` of the named `stream`.
pub fn derive(seed: u64, stream: &str, index: u64) -> u64 {
    let tag = stream
        .bytes()
        .fold(0xCBF2_9CE4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01B3));
    mix(mix(seed ^ tag).wrapping_add(index))
}

pub fn rng(seed: u64, stream: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, stream, index))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_and_indices_separate() {
        assert_ne!(derive(1, "tree", 0), derive(1, "tree", 1));
        assert_ne!(derive(1, "tree", 0), derive(1, "boot", 0));
        assert_ne!(derive(1, "tree", 0), derive(2, "tree", 0));
        assert_eq!(derive(7, "x", 3), derive(7, "x", 3));
    }
}
