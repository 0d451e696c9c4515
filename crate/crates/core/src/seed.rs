//! Deterministic derivation of independent random sub-streams.
//!
//! Every parallel unit of work (a bootstrap cell, an RL trial) gets its own
//! generator seeded from the run seed and a stable textual key, so results do
//! not depend on thread scheduling or iteration order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// 64-bit FNV-1a hash; stable across platforms and releases.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    bytes.iter().fold(OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(PRIME))
}

/// Seed for the sub-stream identified by `parts` under the run seed.
pub fn derive_seed(seed: u64, parts: &[&str]) -> u64 {
    let mut buf = seed.to_le_bytes().to_vec();
    for part in parts {
        // Length-prefix each part so ("ab","c") and ("a","bc") differ.
        buf.extend((part.len() as u64).to_le_bytes());
        buf.extend(part.as_bytes());
    }
    fnv1a(&buf)
}

/// A ChaCha8 generator for the sub-stream identified by `parts`.
pub fn substream(seed: u64, parts: &[&str]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, parts))
}
