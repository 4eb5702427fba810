//! Seeded RNG construction shared across the crate.
//!
//! Everything downstream of a seed must be reproducible byte-for-byte, so
//! all randomness flows through ChaCha8 streams: one u64 seed selects the
//! key, a stream id separates independent consumers (per-simulation, per
//! training run, per GP search) without correlated draws.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// A deterministic RNG for `(seed, stream)`. Distinct streams under the
/// same seed are independent.
pub fn derive_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
