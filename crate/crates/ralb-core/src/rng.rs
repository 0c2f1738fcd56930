//! Seed derivation.
//!
//! Every random decision in the crate draws from a [`ChaCha8Rng`] seeded by
//! `derive_seed(base, tag, index)`. Deriving per-sample seeds from the pair
//! (global seed, sample index) keeps parallel and serial execution
//! bit-identical and makes every pipeline reproducible from its manifest.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Mix a base seed, a purpose tag and an index into a new 64-bit seed
/// (FNV-1a over the concatenated bytes, then an avalanche step).
pub fn derive_seed(base: u64, tag: &str, index: u64) -> u64 {
    const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = FNV_OFFSET;
    for b in base
        .to_le_bytes()
        .iter()
        .chain(tag.as_bytes())
        .chain(index.to_le_bytes().iter())
    {
        h ^= u64::from(*b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    // splitmix64 finalizer
    h = (h ^ (h >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h = (h ^ (h >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    h ^ (h >> 31)
}

/// RNG for a derived stream.
pub fn derive_rng(base: u64, tag: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, tag, index))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_stable_and_distinct() {
        let a = derive_seed(7, "sample", 0);
        assert_eq!(a, derive_seed(7, "sample", 0));
        assert_ne!(a, derive_seed(7, "sample", 1));
        assert_ne!(a, derive_seed(7, "epoch", 0));
        assert_ne!(a, derive_seed(8, "sample", 0));
    }

    #[test]
    fn rng_reproduces() {
        let mut r1 = derive_rng(3, "x", 9);
        let mut r2 = derive_rng(3, "x", 9);
        let v1: Vec<f32> = (0..8).map(|_| r1.gen()).collect();
        let v2: Vec<f32> = (0..8).map(|_| r2.gen()).collect();
        assert_eq!(v1, v2);
    }
}
