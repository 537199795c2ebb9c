//! Seed derivation.
//!
//! A run has a single root seed. Every consumer of randomness asks for a
//! child seed with [`derive`], passing a purpose tag (and optionally an
//! index), so that adding a new consumer never perturbs existing streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// FNV-1a over the tag bytes.
fn tag_hash(tag: &str) -> u64 {
    tag.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

/// Child seed for `(parent, tag)`.
pub fn derive(parent: u64, tag: &str) -> u64 {
    mix(mix(parent) ^ tag_hash(tag))
}

/// Child seed for `(parent, tag, index)`, used for per-item streams such as
/// one stream per trajectory or per trial.
pub fn derive_indexed(parent: u64, tag: &str, index: u64) -> u64 {
    mix(derive(parent, tag) ^ mix(index.wrapping_add(1)))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
