//! Seeded, platform-stable randomness.
//!
//! Pattern sets and synthetic noise are experiment artifacts, so every random
//! draw goes through a counter-based ChaCha8 stream with explicitly documented
//! derivation and selection algorithms.

use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type PsrRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> PsrRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives an independent stream seed from a master seed via one round of
/// splitmix64 applied to `master ^ (stream * golden_gamma)`.
pub fn derive_stream(master: u64, stream: u64) -> u64 {
    let mut z = master ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Chooses `k` distinct indices from `0..n`, uniformly at random, by a partial
/// Fisher-Yates shuffle. Draws are reduced with a plain modulo; the bias is
/// below 2^-50 for n < 2^14 and irrelevant next to pattern statistics.
pub fn choose_k(rng: &mut impl RngCore, n: usize, k: usize) -> Vec<usize> {
    assert!(k <= n, "cannot choose {k} of {n}");
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = i + (rng.next_u64() % (n - i) as u64) as usize;
        idx.swap(i, j);
    }
    idx.truncate(k);
    idx
}

/// Standard normal draw (Ziggurat via rand_distr).
pub fn standard_normal(rng: &mut impl RngCore) -> f64 {
    use rand::Rng;
    rng.sample(rand_distr::StandardNormal)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn choose_k_is_distinct_and_in_range() {
        let mut rng = rng_from_seed(7);
        for _ in 0..50 {
            let picked = choose_k(&mut rng, 37, 13);
            assert_eq!(picked.len(), 13);
            let set: HashSet<_> = picked.iter().collect();
            assert_eq!(set.len(), 13);
            assert!(picked.iter().all(|&i| i < 37));
        }
    }

    #[test]
    fn choose_k_full_is_a_permutation() {
        let mut rng = rng_from_seed(3);
        let mut picked = choose_k(&mut rng, 10, 10);
        picked.sort_unstable();
        assert_eq!(picked, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn same_seed_reproduces() {
        let a = choose_k(&mut rng_from_seed(42), 100, 10);
        let b = choose_k(&mut rng_from_seed(42), 100, 10);
        assert_eq!(a, b);
    }

    #[test]
    fn derived_streams_differ() {
        let s: HashSet<u64> = (0..100).map(|i| derive_stream(1234, i)).collect();
        assert_eq!(s.len(), 100);
    }
}
