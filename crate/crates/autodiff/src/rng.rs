//! Stateless per-step RNG derivation.
//!
//! Every stochastic draw in a training loop comes from a ChaCha generator
//! seeded by (master seed, stream label, step index). Resuming from a
//! checkpoint therefore replays the exact byte stream without serializing
//! generator state.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E3779B97F4A7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D049BB133111EB);
    x ^ (x >> 31)
}

/// Derive a generator from (seed, stream, index). Not cryptographic; only
/// decorrelation across streams and steps matters.
pub fn seed_stream(master: u64, stream: &str, index: u64) -> ChaCha12Rng {
    let mut h = splitmix64(master);
    for &b in stream.as_bytes() {
        h = splitmix64(h ^ b as u64);
    }
    h = splitmix64(h ^ index);
    ChaCha12Rng::seed_from_u64(h)
}
