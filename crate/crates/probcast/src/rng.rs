//! Seeded random number helpers.
//!
//! Every stochastic component in the crate draws from a [`ChaCha12Rng`]
//! created here, so results are reproducible across platforms and across
//! thread schedules. Parallel work never shares a generator; instead each
//! unit of work derives its own seed with [`derive_seed`] and builds an
//! independent stream.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Builds the crate's standard generator from a 64-bit seed.
pub fn rng_from_seed(seed: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(seed)
}

/// Derives a child seed from a parent seed and a tag.
///
/// The mix is SplitMix64 applied to the parent xor the diffused tag, which
/// decorrelates children even for adjacent tags. Deriving is associative
/// enough in practice to build hierarchies: session -> model -> seed index.
pub fn derive_seed(parent: u64, tag: u64) -> u64 {
    splitmix64(parent ^ splitmix64(tag))
}

/// Folds a path of tags into one seed, left to right.
pub fn derive_seed_path(parent: u64, tags: &[u64]) -> u64 {
    tags.iter().fold(parent, |acc, &t| derive_seed(acc, t))
}

/// Stable 64-bit hash of a label (FNV-1a), for seeding by name.
pub fn label_tag(label: &str) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for byte in label.as_bytes() {
        hash ^= u64::from(*byte);
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}
