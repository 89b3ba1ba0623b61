//! Deterministic RNG derivation: independent, reproducible streams keyed by
//! a root seed plus purpose tags, via SHA-256 of the little-endian words.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

/// Stable sub-seed for `(root, tags...)`.
pub fn derive_seed(root: u64, tags: &[u64]) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(root.to_le_bytes());
    for t in tags {
        hasher.update(t.to_le_bytes());
    }
    hasher.finalize().into()
}

/// ChaCha20 stream for `(root, tags...)`.
pub fn derive_rng(root: u64, tags: &[u64]) -> ChaCha20Rng {
    ChaCha20Rng::from_seed(derive_seed(root, tags))
}
