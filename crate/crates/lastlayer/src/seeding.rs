//! Deterministic derivation of per-purpose RNG seeds.
//!
//! Every random stream in the crate (weight init, minibatch shuffling, SGLD
//! noise, bootstrap resampling, dropout masks, ...) is a ChaCha8 generator
//! seeded through this module, so distinct purposes never share or race a
//! stream. The rule is fixed and documented: the derived seed is the first
//! eight bytes (little-endian) of `sha256(master_le || tag || index_le)`.

use sha2::{Digest, Sha256};

/// Derive a child seed for a named stream.
pub fn derive(master: u64, tag: &str) -> u64 {
    derive_indexed(master, tag, 0)
}

/// Derive a child seed for the `index`-th element of a named stream family
/// (ensemble members, per-example dropout masks, ...).
pub fn derive_indexed(master: u64, tag: &str, index: u64) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    hasher.update(tag.as_bytes());
    hasher.update(index.to_le_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("sha256 digest is 32 bytes"))
}
