//! Seed derivation.
//!
//! Every random stream in the crate is a `ChaCha8Rng` seeded from
//! `mix(run_seed, stream_tag)`, where `mix` is two rounds of the SplitMix64
//! finaliser. Sub-streams (per prompt, per eval step) mix again with their
//! index, so generation order never leaks between streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn mix(seed: u64, tag: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ tag.rotate_left(17))
}

pub fn rng_for(seed: u64, tag: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(mix(seed, tag))
}

/// Stream tags.
pub mod stream {
    pub const POOLS: u64 = 0x5001;
    pub const OOD_POOLS: u64 = 0x5002;
    pub const PAIRS: u64 = 0x5003;
    pub const INIT: u64 = 0x5004;
    pub const TRAIN: u64 = 0x5005;
    pub const SFT_SAMPLES: u64 = 0x5006;
    pub const RL_EVAL: u64 = 0x5007;
    pub const EVAL_PAIRS: u64 = 0x5008;
    pub const PESSIMISM: u64 = 0x5009;
}
