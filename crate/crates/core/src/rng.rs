//! Keyed random streams.
//!
//! Every random draw in the crate comes from a ChaCha8 generator seeded by mixing a
//! base seed with a tuple of indices (cell, trial, purpose). Streams therefore depend
//! only on their keys, never on which worker runs them or in what order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Purpose tags, so the truth, mask and noise of one trial use unrelated streams.
pub mod stream {
    pub const TRUTH: u64 = 0x7472_7574_6800_0001;
    pub const MASK: u64 = 0x6d61_736b_0000_0002;
    pub const NOISE: u64 = 0x6e6f_6973_6500_0003;
    pub const OBSERVATION: u64 = 0x6f62_7365_7276_0004;
    pub const CALIBRATION: u64 = 0x6361_6c69_6272_0005;
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Fold `keys` into `base` to get a child seed.
pub fn derive_seed(base: u64, keys: &[u64]) -> u64 {
    keys.iter()
        .fold(splitmix64(base), |acc, &k| splitmix64(acc ^ splitmix64(k)))
}

pub fn keyed_rng(base: u64, keys: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, keys))
}
