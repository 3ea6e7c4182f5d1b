//! Deterministic seed derivation.
//!
//! Every command takes a single root seed; sub-seeds for data
//! generation, model init, epoch shuffles, and sweep runs are derived
//! as `derive(root, tag, index)`. The derivation is a fixed FNV-1a /
//! SplitMix64 combination, so it is stable across platforms and runs
//! and distinct `(tag, index)` pairs never collide in practice.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf29ce484222325;
const FNV_PRIME: u64 = 0x100000001b3;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Derive a sub-seed from `(root, tag, index)`.
pub fn derive(root: u64, tag: &str, index: u64) -> u64 {
    let mut h = FNV_OFFSET ^ root;
    for b in tag.bytes() {
        h = (h ^ u64::from(b)).wrapping_mul(FNV_PRIME);
    }
    splitmix(h ^ splitmix(index))
}

/// A deterministic RNG seeded from `(root, tag, index)`.
pub fn rng(root: u64, tag: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(root, tag, index))
}
