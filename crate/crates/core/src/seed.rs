//! Seed derivation for replications.
//!
//! Replication `r` of an experiment with base seed `s` draws from
//! `ChaCha8Rng::seed_from_u64(replication_seed(s, r))`, where
//! `replication_seed(s, r) = splitmix64(s ⊕ splitmix64(r))`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// One step of the SplitMix64 output function.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn replication_seed(base: u64, replication: u64) -> u64 {
    splitmix64(base ^ splitmix64(replication))
}

pub fn replication_rng(base: u64, replication: u64) -> SimRng {
    SimRng::seed_from_u64(replication_seed(base, replication))
}
