//! Deterministic per-task random streams.
//!
//! Every (beam, frame) synthesis draws from its own ChaCha stream whose seed
//! is mixed from the master seed and the task coordinates, so results do not
//! depend on scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds a list of coordinates into one 64-bit seed.
pub fn derive_seed(master: u64, coords: &[u64]) -> u64 {
    coords
        .iter()
        .fold(mix64(master), |acc, &c| mix64(acc ^ mix64(c.wrapping_add(0xA5A5_A5A5))))
}

pub fn stream(master: u64, coords: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, coords))
}
