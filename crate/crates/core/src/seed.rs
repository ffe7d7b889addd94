//! Order-independent seed derivation.
//!
//! Every random choice is driven by an RNG seeded from the global seed plus
//! the identity of the unit of work, so parallel scheduling never changes
//! outputs.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub fn derive_seed(global: u64, parts: &[&str]) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(global.to_le_bytes());
    for part in parts {
        hasher.update((part.len() as u64).to_le_bytes());
        hasher.update(part.as_bytes());
    }
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

pub fn rng_for(global: u64, parts: &[&str]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(global, parts))
}

/// Uniform value in [0, 1) derived from the seed and parts.
pub fn unit_interval(global: u64, parts: &[&str]) -> f64 {
    (derive_seed(global, parts) >> 11) as f64 / (1u64 << 53) as f64
}
