//! Seed derivation for independent, reproducible random streams.
//!
//! Every random draw in the simulator comes from a ChaCha8 stream whose seed
//! is derived from the run seed plus a tuple of integer stream labels
//! (source, class, purpose, round, ...). Streams with different labels are
//! statistically independent and never depend on execution order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Purpose tags mixed into stream labels so unrelated consumers never share
/// a stream even when the remaining labels coincide.
pub mod purpose {
    pub const GENERATE: u64 = 0x01;
    pub const PARTITION: u64 = 0x02;
    pub const SPLIT_HALVES: u64 = 0x03;
    pub const INIT: u64 = 0x04;
    pub const LOCAL_TRAIN: u64 = 0x05;
    pub const CORRUPT: u64 = 0x06;
    pub const PRETRAIN: u64 = 0x07;
    pub const FOG: u64 = 0x08;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes `labels` into `seed`. Order of labels matters.
pub fn derive_seed(seed: u64, labels: &[u64]) -> u64 {
    labels
        .iter()
        .fold(splitmix64(seed), |acc, &l| splitmix64(acc ^ splitmix64(l)))
}

pub fn stream(seed: u64, labels: &[u64]) -> StreamRng {
    StreamRng::seed_from_u64(derive_seed(seed, labels))
}

/// Stable 64-bit label for a string key (FNV-1a).
pub fn label_of(key: &str) -> u64 {
    key.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}
