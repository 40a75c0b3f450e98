//! Deterministic seed derivation.
//!
//! Every source of randomness in the pipeline is a [`ChaCha12Rng`] seeded
//! through this module, so a single root seed reproduces an entire run.
//! Component seeds are derived with SplitMix64 over `(root, component tag,
//! counter)`; the tag constants below document the expansion scheme.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Component tags for the seed expansion. One tag per independent
/// randomness consumer; counters distinguish repeated uses (epochs,
/// subjects, sweep points).
pub mod tag {
    pub const SYNTH: u64 = 0x01;
    pub const SPLIT: u64 = 0x02;
    pub const PAIRS: u64 = 0x03;
    pub const VERIFIER_INIT: u64 = 0x04;
    pub const PRIVATIZER_INIT: u64 = 0x05;
    pub const ATTACKER_INIT: u64 = 0x06;
    pub const TRAIN_STEP: u64 = 0x07;
    pub const NOISE: u64 = 0x08;
    pub const VALIDATION: u64 = 0x09;
    pub const EVAL_PAIRS: u64 = 0x0a;
    pub const SWEEP_POINT: u64 = 0x0b;
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a child seed from `(root, tag, counter)`.
pub fn derive(root: u64, tag: u64, counter: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(root) ^ tag) ^ counter)
}

/// Seeded RNG for one component use.
pub fn rng(root: u64, tag: u64, counter: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(derive(root, tag, counter))
}
