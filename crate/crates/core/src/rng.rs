//! Counter-based random streams.
//!
//! Every random quantity is a deterministic function of a user seed and a
//! tuple of integer keys (design point, replicate, ...). Each key tuple gets
//! its own ChaCha8 stream, so draws never depend on how work is split
//! across threads or in which order replicates run.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use rand_chacha::ChaCha8Rng as StreamRng;

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Folds a key tuple into one 64-bit value.
pub fn fold_keys(keys: &[u64]) -> u64 {
    keys.iter().fold(0x243f_6a88_85a3_08d3, |acc, &k| mix64(acc ^ mix64(k)))
}

/// Independent stream for `(seed, keys...)`.
pub fn stream(seed: u64, keys: &[u64]) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(fold_keys(keys));
    rng
}

/// Derives a child seed, used when a replicate runs its own bootstrap.
pub fn child_seed(seed: u64, keys: &[u64]) -> u64 {
    mix64(seed ^ fold_keys(keys).rotate_left(17))
}
