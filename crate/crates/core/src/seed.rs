//! Seed derivation.
//!
//! Every stage of a run draws its randomness from a seed derived from the
//! master seed with [`derive`]: `splitmix64(master ^ splitmix64(tag))`, where
//! `tag` is a fixed per-stage constant (see [`Stage`]). A candidate's own
//! stream is `derive(training_seed, model_seed)`. Stages are therefore
//! reproducible one at a time.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The RNG used everywhere in the crate.
pub type Rng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Generate = 1,
    Split = 2,
    Training = 3,
    Anomalies = 4,
}

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive(parent: u64, tag: u64) -> u64 {
    splitmix64(parent ^ splitmix64(tag))
}

pub fn stage_seed(master: u64, stage: Stage) -> u64 {
    derive(master, stage as u64)
}

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
