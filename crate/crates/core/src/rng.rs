//! Seed discipline.
//!
//! A run is identified by one 64-bit master seed. Replicate `k` gets its own seed
//! `splitmix64(master + golden * (k + 1))`, and each concern inside a replicate
//! (initial configuration, dynamics, probe placement) reads a distinct ChaCha8
//! stream of that seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Stream {
    Init = 0,
    Dynamics = 1,
    Probes = 2,
}

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(GOLDEN);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Seed of replicate `k` under `master`.
pub fn replicate_seed(master: u64, k: u64) -> u64 {
    splitmix64(master.wrapping_add(GOLDEN.wrapping_mul(k.wrapping_add(1))))
}

/// Mixes an arbitrary list of words into a seed; used for parameter-keyed cells.
pub fn mix_seed(master: u64, words: &[u64]) -> u64 {
    words.iter().fold(splitmix64(master), |acc, &w| splitmix64(acc ^ splitmix64(w)))
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}
