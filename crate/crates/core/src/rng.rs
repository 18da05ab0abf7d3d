//! Deterministic RNG stream derivation.
//!
//! Every stochastic component takes an explicit seed and derives child
//! streams from `(master seed, tag, index)`. Parallel and serial execution
//! therefore draw from identical streams, and two runs with the same master
//! seed are bit-reproducible.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// FNV-1a, used only to fold a static tag into a seed. Stable across
/// platforms and releases, unlike `std::hash`.
fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// SplitMix64 finalizer; decorrelates nearby seeds.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a child RNG from a master seed, a component tag and an index.
pub fn stream(master: u64, tag: &str, index: u64) -> ChaCha8Rng {
    let seed = splitmix64(master ^ fnv1a64(tag.as_bytes()));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Derive a plain child seed (for components that take a `u64`).
pub fn child_seed(master: u64, tag: &str, index: u64) -> u64 {
    splitmix64(splitmix64(master ^ fnv1a64(tag.as_bytes())).wrapping_add(index))
}
