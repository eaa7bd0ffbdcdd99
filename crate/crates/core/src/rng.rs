//! Counter-based seed splitting.
//!
//! All randomness in a run flows from one 64-bit seed. Each task derives its
//! own generator from `(seed, stream, index)`, so results do not depend on how
//! work is partitioned across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags keep the modules from sharing random sequences.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    DivisorSampling = 1,
    Coverage = 2,
    Equidist = 3,
    Census = 4,
    Harness = 5,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed for task `index` of `stream`.
pub fn split_seed(seed: u64, stream: Stream, index: u64) -> u64 {
    splitmix64(splitmix64(seed ^ splitmix64(stream as u64)) ^ index)
}

/// A deterministic generator for task `index` of `stream`.
pub fn task_rng(seed: u64, stream: Stream, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(split_seed(seed, stream, index))
}
