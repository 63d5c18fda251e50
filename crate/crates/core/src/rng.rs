//! Seed derivation. Every random stream in the crate is a ChaCha8 generator
//! seeded from `(seed, stream, index)`, so independent jobs (sampler runs,
//! folds, sweep points) can run in any order and still reproduce.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Stream tags keep derived seeds for different purposes apart.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Synthetic = 1,
    Sampler = 2,
    Folds = 3,
    Validation = 4,
    Init = 5,
    Minibatch = 6,
    Sweep = 7,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_seed(seed: u64, stream: Stream, index: u64) -> u64 {
    splitmix(splitmix(splitmix(seed) ^ stream as u64) ^ index)
}

pub fn seeded(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

pub fn derived(seed: u64, stream: Stream, index: u64) -> Rng {
    seeded(derive_seed(seed, stream, index))
}
