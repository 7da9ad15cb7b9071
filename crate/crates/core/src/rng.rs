//! Seeded pseudo-random streams.
//!
//! Every random decision in the crate draws from a [`Prng`] created through
//! [`seeded`]; independent jobs get their own stream via [`derive_seed`].

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub type Prng = ChaCha20Rng;

/// Generator identity recorded alongside experiment outputs.
pub const PRNG_NAME: &str = "chacha20 (rand_chacha 0.3, seed_from_u64)";

pub fn seeded(seed: u64) -> Prng {
    ChaCha20Rng::seed_from_u64(seed)
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a base seed with a path of tags (point index, repetition, ...)
/// into a child seed.
pub fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix64(base), |acc, &t| splitmix64(acc ^ splitmix64(t)))
}
