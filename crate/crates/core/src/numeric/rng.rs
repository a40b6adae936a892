//! The single pseudo-random generator used across the crate.
//!
//! Every stochastic call site takes an explicit `u64` seed and builds a
//! [`ChaCha8Rng`] through [`seeded`]. ChaCha8 output is specified
//! independently of platform endianness and word size, so a seed yields the
//! same stream everywhere.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives an independent sub-seed so that separate consumers of one user
/// seed do not share a stream.
pub fn derive(seed: u64, stream: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
