//! Seed derivation for independent, reproducible random streams.
//!
//! Every replication (bootstrap draw, Monte Carlo repetition) gets its own generator seeded
//! from `(master, stream, index)`, so results do not depend on scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic child seed of `master` for a named stream and index.
pub fn derive_seed(master: u64, stream: u64, index: u64) -> u64 {
    mix64(mix64(mix64(master) ^ stream.wrapping_mul(0xD6E8_FEB8_6659_FD93)) ^ index)
}

/// Generator for `(master, stream, index)`.
pub fn stream_rng(master: u64, stream: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, stream, index))
}

/// Stream tags used across the crate.
pub mod streams {
    pub const BOOTSTRAP: u64 = 1;
    pub const SAMPLE_X: u64 = 2;
    pub const SAMPLE_Y: u64 = 3;
    pub const CENTERING: u64 = 4;
    pub const PERMUTATION: u64 = 5;
    pub const LABELS: u64 = 6;
    pub const GRID: u64 = 7;
    pub const SIGNS: u64 = 8;
    pub const BACKGROUND: u64 = 9;
}
