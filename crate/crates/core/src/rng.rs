//! Seed derivation.
//!
//! Every randomised component draws from its own ChaCha stream whose seed is
//! derived from the run seed plus a path of tags, so results never depend on
//! the order in which independent components happen to be executed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The RNG used throughout the crate.
pub type Stream = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes `tags` into `seed`. Distinct tag paths give unrelated seeds.
pub fn derive_seed(seed: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix64(seed), |acc, &t| splitmix64(acc ^ splitmix64(t)))
}

/// A fresh stream for the given seed and tag path.
pub fn stream(seed: u64, tags: &[u64]) -> Stream {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, tags))
}

/// Stable 64-bit FNV-1a hash, used to turn string identifiers into tags.
pub fn tag_str(s: &str) -> u64 {
    s.bytes().fold(0xCBF2_9CE4_8422_2325u64, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01B3)
    })
}
