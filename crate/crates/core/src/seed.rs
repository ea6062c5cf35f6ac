//! Sub-seed derivation.
//!
//! Every random stream in the crate is a `ChaCha8Rng` seeded from a `u64`.
//! Replicate `i` of a Monte Carlo run seeded with `s` uses
//! `sub_seed(s, i)`, a SplitMix64 mix of the pair, so results do not depend
//! on how replicates are scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for the `counter`-th child stream of `seed`.
pub fn sub_seed(seed: u64, counter: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ counter.wrapping_mul(GOLDEN))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
