//! Seed derivation. Every random draw in the crate comes from a ChaCha
//! stream keyed by an explicit seed, never from shared state.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Stream ids within one shot seed.
pub(crate) const STREAM_LASER: u64 = 1;
pub(crate) const STREAM_DETECTION: u64 = 2;

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Seed of shot `(point, run)` in a campaign keyed by `master`.
pub fn shot_seed(master: u64, point: u32, run: u32) -> u64 {
    let mut rng = stream_rng(master, ((point as u64) << 32) | run as u64);
    rng.next_u64()
}
