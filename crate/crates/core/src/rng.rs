//! Seeded random streams.
//!
//! Every generator in the crate is a ChaCha8 stream keyed by a 64-bit seed.
//! ChaCha8 output is specified bit-for-bit and does not depend on the host
//! platform, so fixtures built from a seed are reproducible everywhere.
//! Independent sub-streams are derived with [`split`], a SplitMix64 finalizer
//! over `(seed, stream)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Generator for a 64-bit seed.
pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives the seed of sub-stream `stream` from `seed`.
pub fn split(seed: u64, stream: u64) -> u64 {
    splitmix64(seed ^ splitmix64(stream.wrapping_add(0x9E37_79B9_7F4A_7C15)))
}

/// Generator for sub-stream `stream` of `seed`.
pub fn substream(seed: u64, stream: u64) -> Rng {
    seeded(split(seed, stream))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
