//! Seed derivation for reproducible simulation streams.
//!
//! Every random draw in the crate flows from a `ChaCha8Rng` seeded through
//! [`derive_seed`], so a run is a pure function of its master seed and the
//! stream tags are stable across program versions.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags for the independent RNG streams of one experiment.
pub mod stream {
    pub const DATASET: u64 = 0x01;
    pub const PARTITION: u64 = 0x02;
    pub const CHANNEL: u64 = 0x03;
    pub const MINIBATCH: u64 = 0x04;
    pub const PROBE: u64 = 0x05;
    pub const OBJECTIVE: u64 = 0x06;
}

/// Mixes `(master, tag)` into a decorrelated 64-bit seed (splitmix64 finalizer).
pub fn derive_seed(master: u64, tag: u64) -> u64 {
    let mut z = master ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seeded generator for the given `(master, tag)` stream.
pub fn stream_rng(master: u64, tag: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, tag))
}

/// Per-round generator: independent across rounds and streams.
pub fn round_rng(master: u64, tag: u64, round: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(derive_seed(master, tag), round))
}
