//! Deterministic seed derivation for the nested experiment structure
//! (trial -> protocol run -> redo attempt).
//!
//! Children are derived by hashing `(parent seed, domain tag, two indices)`,
//! so sibling streams are independent, order-insensitive, and identical
//! whether runs execute sequentially, in parallel, or across a transport.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

fn digest(seed: u64, domain: &str, a: u64, b: u64) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update([domain.len() as u8]);
    h.update(domain.as_bytes());
    h.update(a.to_le_bytes());
    h.update(b.to_le_bytes());
    h.finalize().into()
}

/// A child RNG for `(domain, a, b)` under `seed`.
pub fn substream(seed: u64, domain: &str, a: u64, b: u64) -> ChaCha8Rng {
    ChaCha8Rng::from_seed(digest(seed, domain, a, b))
}

/// A child seed, for nesting one more level.
pub fn derive_seed(seed: u64, domain: &str, a: u64, b: u64) -> u64 {
    let d = digest(seed, domain, a, b);
    u64::from_le_bytes(d[..8].try_into().unwrap())
}
