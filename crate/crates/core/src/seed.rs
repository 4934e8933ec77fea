//! Keyed seed derivation.
//!
//! All randomness descends from one top-level seed. Each consumer derives its
//! own stream from `(root, labels...)`, so a component can be replayed in
//! isolation and results never depend on scheduling or iteration order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// The deterministic generator used everywhere in the toolkit.
pub type DeterministicRng = ChaCha8Rng;

/// Default top-level seed.
pub const DEFAULT_SEED: u64 = 42;

/// Derives a 64-bit seed from a root seed and a sequence of labels.
pub fn derive_seed(root: u64, labels: &[&str]) -> u64 {
    let mut h = Sha256::new();
    h.update(root.to_le_bytes());
    for l in labels {
        h.update((l.len() as u64).to_le_bytes());
        h.update(l.as_bytes());
    }
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

/// A generator seeded from `derive_seed(root, labels)`.
pub fn rng_for(root: u64, labels: &[&str]) -> DeterministicRng {
    DeterministicRng::seed_from_u64(derive_seed(root, labels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn derivation_is_stable_and_label_sensitive() {
        assert_eq!(derive_seed(42, &["a", "b"]), derive_seed(42, &["a", "b"]));
        assert_ne!(derive_seed(42, &["a", "b"]), derive_seed(42, &["ab"]));
        assert_ne!(derive_seed(42, &["a"]), derive_seed(43, &["a"]));
        let x: u64 = rng_for(7, &["x"]).gen();
        let y: u64 = rng_for(7, &["x"]).gen();
        assert_eq!(x, y);
    }
}
