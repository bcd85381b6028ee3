//! Seeded random-stream derivation and scalar sampling helpers.
//!
//! Every random draw in the workspace goes through a ChaCha12 stream
//! derived from an explicit seed plus a tag path, so independent pipeline
//! stages (and parallel workers) get independent, reproducible streams.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// SplitMix64 step; used only to mix seeds and tags into stream keys.
fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Derives a deterministic RNG from a seed and a tag path.
pub fn stream(seed: u64, tags: &[u64]) -> ChaCha12Rng {
    let mut key = splitmix64(seed);
    for &t in tags {
        key = splitmix64(key ^ t);
    }
    let mut full = [0u8; 32];
    let mut k = key;
    for chunk in full.chunks_mut(8) {
        k = splitmix64(k);
        chunk.copy_from_slice(&k.to_le_bytes());
    }
    ChaCha12Rng::from_seed(full)
}

/// Uniform draw in `[lo, hi)`.
pub fn uniform(rng: &mut ChaCha12Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

/// Standard normal via Box-Muller, kept local so results do not depend on
/// distribution-crate internals.
pub fn normal(rng: &mut ChaCha12Rng) -> f64 {
    let u1: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = rng.random::<f64>();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}
