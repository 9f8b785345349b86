//! Seed substreams.
//!
//! Every command owns one root seed. Each random consumer draws from its own
//! substream `derive(root, purpose)`, the first eight bytes (little-endian) of
//! `SHA-256(root.to_le_bytes() || purpose)`. Adding a consumer with a new
//! purpose string leaves every existing stream untouched.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub fn derive(root: u64, purpose: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(root.to_le_bytes());
    hasher.update(purpose.as_bytes());
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn substream(root: u64, purpose: &str) -> ChaCha8Rng {
    rng(derive(root, purpose))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn purposes_are_independent() {
        assert_eq!(derive(7, "index"), derive(7, "index"));
        assert_ne!(derive(7, "index"), derive(7, "train"));
        assert_ne!(derive(7, "index"), derive(8, "index"));
    }
}
