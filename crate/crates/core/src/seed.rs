//! Deterministic seed derivation.
//!
//! Every random stream in the crate is a `ChaCha8Rng` seeded from a 64-bit
//! value. Sub-streams (per sample block, per cluster/attribute task) are
//! derived from the master seed by mixing in stable identifiers, so results
//! never depend on scheduling order or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator used throughout the crate.
pub type Rng = ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mix an identifier into a seed.
pub fn mix(seed: u64, id: u64) -> u64 {
    splitmix64(seed ^ splitmix64(id))
}

/// FNV-1a hash of a name; used as the stable id of an attribute.
pub fn name_id(name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Seed for the sensitivity test of one (cluster, attribute) pair.
pub fn task_seed(master: u64, cluster_id: usize, attribute: &str) -> u64 {
    mix(mix(master, cluster_id as u64), name_id(attribute))
}

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
