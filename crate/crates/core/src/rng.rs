//! Seeded, portable random streams.
//!
//! Every Monte Carlo trial draws from its own ChaCha8 stream whose seed is a
//! SplitMix64 hash of `(base_seed, stream)`, so results do not depend on the
//! order in which workers pick up trials.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type TrialRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of substream `stream` under `base_seed`.
pub fn substream_seed(base_seed: u64, stream: u64) -> u64 {
    splitmix64(splitmix64(base_seed) ^ stream.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

pub fn substream(base_seed: u64, stream: u64) -> TrialRng {
    ChaCha8Rng::seed_from_u64(substream_seed(base_seed, stream))
}

pub fn seeded(seed: u64) -> TrialRng {
    ChaCha8Rng::seed_from_u64(seed)
}
