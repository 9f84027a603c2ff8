//! Seeded random streams.
//!
//! Every replication owns a [`RandomStream`] derived from
//! `(master_seed, grid_index, replication)`. The master seed is expanded to a
//! 256-bit ChaCha key with SplitMix64, and the pair `(grid_index, replication)`
//! is packed into the 64-bit ChaCha stream id as `grid_index << 32 | replication`.
//! SplitMix64 is a bijection on `u64` and the packing is injective for indices
//! below 2^32, so distinct triples always select distinct streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type RandomStream = ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn key_from_seed(seed: u64) -> [u8; 32] {
    let mut key = [0u8; 32];
    let mut state = seed;
    for chunk in key.chunks_exact_mut(8) {
        state = state.wrapping_add(GOLDEN_GAMMA);
        chunk.copy_from_slice(&mix64(state).to_le_bytes());
    }
    key
}

/// Stream for one-off runs (CLI inspections, unit tests).
pub fn stream_from_seed(seed: u64) -> RandomStream {
    ChaCha8Rng::from_seed(key_from_seed(seed))
}

/// Stream for replication `replication` at grid point `grid_index`.
pub fn replication_stream(master_seed: u64, grid_index: u32, replication: u32) -> RandomStream {
    let mut rng = ChaCha8Rng::from_seed(key_from_seed(master_seed));
    rng.set_stream(((grid_index as u64) << 32) | replication as u64);
    rng
}
