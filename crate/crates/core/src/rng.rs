//! Seed derivation. Every random consumer gets its own generator derived
//! from the session seed and a fixed label, so adding draws in one consumer
//! never perturbs another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type SessionRng = ChaCha8Rng;

pub fn derive_seed(seed: u64, label: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(label.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

pub fn derive_rng(seed: u64, label: &str) -> SessionRng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, label))
}

pub fn seeded(seed: u64) -> SessionRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Hex SHA-256 digest, truncated to `len` hex chars.
pub fn short_digest(bytes: &[u8], len: usize) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out.truncate(len);
    out
}
