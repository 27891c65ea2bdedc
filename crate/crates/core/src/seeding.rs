//! Stateless derivation of RNG streams from the run seed. Every random
//! decision (weight init, sample order, augmentation shifts, pool draws)
//! derives its generator from `(seed, purpose tags, counters)`, so resumed
//! runs and view-subset runs reproduce the exact same draws without
//! serializing RNG state.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub fn derive_rng(seed: u64, tags: &[&str], counters: &[u64]) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    for t in tags {
        hasher.update([0xfe]);
        hasher.update(t.as_bytes());
    }
    for c in counters {
        hasher.update([0xff]);
        hasher.update(c.to_le_bytes());
    }
    let digest = hasher.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(key)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: u64 = derive_rng(7, &["x"], &[1]).random();
        let b: u64 = derive_rng(7, &["x"], &[1]).random();
        let c: u64 = derive_rng(7, &["x"], &[2]).random();
        let d: u64 = derive_rng(7, &["y"], &[1]).random();
        let e: u64 = derive_rng(8, &["x"], &[1]).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
        assert_ne!(a, e);
    }
}
