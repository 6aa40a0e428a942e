//! Seed plumbing. Every random draw in the crate goes through a ChaCha8
//! stream built here, so results are stable across platforms and releases.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derive an independent child seed from a parent seed and a stream label
/// (splitmix64 finalizer over the pair).
pub fn derive_seed(parent: u64, stream: u64) -> u64 {
    let mut z = parent
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Named sub-streams used by the experiment pipeline.
pub mod stream {
    pub const GROUND_TRUTH: u64 = 1;
    pub const TRAIN_DESIGN: u64 = 2;
    pub const TRAIN_LABELS: u64 = 3;
    pub const TEST_DESIGN: u64 = 4;
    pub const TEST_LABELS: u64 = 5;
    pub const POPULATION: u64 = 6;
    pub const CHECKS: u64 = 7;
}
