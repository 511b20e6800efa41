//! Seed derivation for independent, reproducible random streams.
//!
//! Every stochastic consumer (initialization, shuffling, perturbation, data
//! generation) draws from its own ChaCha stream whose seed is a pure function
//! of a tuple of integers, so results never depend on scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Stream tags keep derived seeds for different purposes apart.
pub mod tag {
    pub const INIT: u64 = 1;
    pub const SHUFFLE: u64 = 2;
    pub const PERTURB: u64 = 3;
    pub const GENERATE: u64 = 4;
    pub const PARTITION: u64 = 5;
    pub const LABEL_MASK: u64 = 6;
    pub const SPLIT: u64 = 7;
    pub const SUBSAMPLE: u64 = 8;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a sequence of integers into one 64-bit seed.
pub fn derive_seed(parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(0x6A09_E667_F3BC_C908, |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn stream(parts: &[u64]) -> StreamRng {
    StreamRng::seed_from_u64(derive_seed(parts))
}
