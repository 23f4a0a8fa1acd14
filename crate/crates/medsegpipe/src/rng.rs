//! Deterministic seed derivation.
//!
//! Every random decision in the pipeline draws from a ChaCha stream whose
//! seed is derived from the experiment seed plus a list of integer tags
//! (purpose, epoch, sample index, patch index, ...). Items therefore get
//! independent, reproducible sub-streams no matter which thread — or in
//! which order — they are processed.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Purpose tags keep unrelated streams from colliding.
pub mod tag {
    pub const AUGMENT: u64 = 1;
    pub const CROP: u64 = 2;
    pub const SHUFFLE: u64 = 3;
    pub const SPLIT: u64 = 4;
    pub const SYNTH: u64 = 5;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mix a seed with tags into a single derived seed.
pub fn derive(seed: u64, tags: &[u64]) -> u64 {
    let mut state = splitmix64(seed);
    for &t in tags {
        state = splitmix64(state ^ splitmix64(t));
    }
    state
}

/// Deterministic sub-stream for (seed, tags).
pub fn stream(seed: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, tags))
}
