//! Counter-based random streams.
//!
//! Every stochastic routine draws from a ChaCha8 generator keyed by a
//! `(seed, domain)` pair and positioned on a stream selected by a counter
//! (replicate index, row index, ...). A replicate's draws therefore never
//! depend on which thread evaluated it or in what order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream domains. Distinct domains keep e.g. the null permutations and the
/// bandwidth Monte Carlo independent even when they share a user seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    NullPermutation = 1,
    Bandwidth = 2,
    Generator = 3,
    TieBreak = 4,
    Augment = 5,
    Replicate = 6,
    Subsample = 7,
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from a parent seed and a counter.
pub fn derive_seed(seed: u64, domain: Domain, counter: u64) -> u64 {
    mix64(mix64(seed ^ mix64(domain as u64)) ^ counter)
}

/// Generator for `(seed, domain)` positioned on stream `stream`.
pub fn stream(seed: u64, domain: Domain, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(mix64(seed ^ mix64(domain as u64)));
    rng.set_stream(stream);
    rng
}
