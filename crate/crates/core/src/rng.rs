//! Seed derivation. Every random stream in the crate is a ChaCha8 generator
//! keyed by a base seed plus a path of stream tags.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_seed(seed: u64, stream: &[u64]) -> u64 {
    stream
        .iter()
        .fold(splitmix(seed), |acc, &tag| splitmix(acc ^ splitmix(tag)))
}

pub fn rng_for(seed: u64, stream: &[u64]) -> Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, stream))
}

/// Stream tags, so that unrelated consumers never share a generator.
pub mod stream {
    pub const TASK: u64 = 1;
    pub const TEACHER: u64 = 2;
    pub const SUPERNET_INIT: u64 = 3;
    pub const SUPERNET_TRAIN: u64 = 4;
    pub const STANDALONE: u64 = 5;
    pub const SPLIT: u64 = 6;
    pub const BASELINE: u64 = 7;
    pub const SSL: u64 = 8;
    pub const SUBSAMPLE: u64 = 9;
}
