//! Seeded randomness.
//!
//! Every random decision in the crate draws from ChaCha8, a portable stream
//! cipher generator whose output for a given seed is identical on every
//! platform. Independent streams are derived from a master seed with
//! SplitMix64; adding a stream leaves the others unchanged.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SeededRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives the seed of stream `stream` from `master`.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    splitmix64(splitmix64(master) ^ stream.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

/// Stream identifiers used across the pipeline.
pub mod streams {
    pub const HOLDOUT: u64 = 1;
    pub const SPLIT: u64 = 2;
    pub const INIT: u64 = 3;
    pub const TRAIN: u64 = 4;
    pub const FOLDS: u64 = 5;
    pub const FOLD_BASE: u64 = 1000;
}
