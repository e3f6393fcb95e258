//! Seed splitting.
//!
//! Every random stream in the crate is a `ChaCha8Rng` seeded from a master
//! seed and a path of integer labels (realization index, chain index, epoch,
//! ...). The child seed is obtained by folding each label into the parent with
//! SplitMix64:
//!
//! ```text
//! child = splitmix64(parent ^ splitmix64(label + 0x9E3779B97F4A7C15))
//! ```
//!
//! so streams never depend on the order in which they are created.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for `label` under `parent`.
#[inline]
pub fn derive_seed(parent: u64, label: u64) -> u64 {
    splitmix64(parent ^ splitmix64(label.wrapping_add(GOLDEN)))
}

pub fn derive_path(master: u64, path: &[u64]) -> u64 {
    path.iter().fold(master, |s, &l| derive_seed(s, l))
}

pub fn rng_for(master: u64, path: &[u64]) -> Rng {
    Rng::seed_from_u64(derive_path(master, path))
}

/// Stream labels, kept distinct so that unrelated consumers of the same
/// master seed never share a stream.
pub mod stream {
    pub const MEASURE: u64 = 1;
    pub const CORRUPT: u64 = 2;
    pub const DISORDER: u64 = 3;
    pub const INIT: u64 = 4;
    pub const SHUFFLE: u64 = 5;
    pub const NEGATIVE: u64 = 6;
    pub const POSITIVE: u64 = 7;
    pub const SPLIT: u64 = 8;
    pub const GIBBS: u64 = 9;
    pub const REPLICA_A: u64 = 10;
    pub const REPLICA_B: u64 = 11;
    pub const CHANNEL: u64 = 12;
}
