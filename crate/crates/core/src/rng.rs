//! Replicate-scoped random streams.
//!
//! Every worker item owns a `ChaCha8Rng` seeded from
//! `mix64(master_seed, replicate, stage)`, so results do not depend on how
//! replicates are scheduled across threads.

use std::collections::HashSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub type SimRng = ChaCha8Rng;

/// Stage tags keep streams of different pipeline stages disjoint.
pub mod stage {
    pub const SNAPSHOT: u64 = 0x736e_6170;
    pub const CONTINUATION: u64 = 0x636f_6e74;
    pub const PROBES: u64 = 0x7072_6f62;
    pub const FULL_RUN: u64 = 0x6675_6c6c;
    pub const LIMIT_W: u64 = 0x6c69_6d57;
    pub const CMJ: u64 = 0x636d_6a73;
}

/// SplitMix64 finalizer (Stafford variant 13).
#[inline]
pub fn avalanche(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes the three words through chained avalanche rounds, each absorbing
/// one input offset by the golden-ratio increment.
pub fn mix64(master_seed: u64, replicate: u64, stage: u64) -> u64 {
    const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;
    let a = avalanche(master_seed.wrapping_add(GOLDEN));
    let b = avalanche(a ^ stage.wrapping_add(GOLDEN.wrapping_mul(2)));
    avalanche(b ^ replicate.wrapping_add(GOLDEN.wrapping_mul(3)))
}

pub fn stream(master_seed: u64, replicate: u64, stage: u64) -> SimRng {
    SimRng::seed_from_u64(mix64(master_seed, replicate, stage))
}

/// Errors out if two replicates of one stage would share a seed.
pub fn check_distinct(master_seed: u64, stage: u64, replicates: u64) -> Result<()> {
    let mut seen = HashSet::with_capacity(replicates as usize);
    for r in 0..replicates {
        if !seen.insert(mix64(master_seed, r, stage)) {
            return Err(Error::Config(format!(
                "seed collision for replicate {r} of stage {stage:#x}"
            )));
        }
    }
    Ok(())
}
