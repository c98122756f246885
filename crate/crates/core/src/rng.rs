//! Deterministic seeding helpers. All randomness in the crate flows through
//! ChaCha8 generators derived from a user seed, so runs are reproducible.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// splitmix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives an independent sub-seed for stream `stream` of `seed`.
pub fn derive(seed: u64, stream: u64) -> u64 {
    mix64(mix64(seed) ^ mix64(stream.wrapping_mul(0xd605_bbb5_8c8a_bbd5).wrapping_add(1)))
}

pub fn rng(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

pub fn sub_rng(seed: u64, stream: u64) -> Rng {
    rng(derive(seed, stream))
}

/// Hashes a seed together with a real vector (bit patterns), used to draw
/// noise that depends on both.
pub fn hash_point(seed: u64, x: &[f64]) -> u64 {
    x.iter()
        .fold(mix64(seed), |h, v| mix64(h ^ v.to_bits()))
}
