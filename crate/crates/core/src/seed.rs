//! Labeled seed derivation.
//!
//! Every random stream in the crate is derived from one root seed plus a
//! component label and an index, so adding a consumer never shifts the
//! stream another consumer sees.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub type Rng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedTree {
    root: u64,
}

impl SeedTree {
    pub fn new(root: u64) -> Self {
        Self { root }
    }

    pub fn root(&self) -> u64 {
        self.root
    }

    fn digest(&self, label: &str, index: u64) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(self.root.to_le_bytes());
        h.update((label.len() as u64).to_le_bytes());
        h.update(label.as_bytes());
        h.update(index.to_le_bytes());
        let out = h.finalize();
        let mut bytes = [0u8; 32];
        bytes.copy_from_slice(&out);
        bytes
    }

    /// Derived 64-bit seed for `(label, index)`.
    pub fn derive(&self, label: &str, index: u64) -> u64 {
        let d = self.digest(label, index);
        u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
    }

    /// Child tree rooted at the derived seed.
    pub fn child(&self, label: &str, index: u64) -> SeedTree {
        SeedTree::new(self.derive(label, index))
    }

    pub fn rng(&self, label: &str, index: u64) -> Rng {
        Rng::from_seed(self.digest(label, index))
    }
}

/// Rng seeded directly from a 64-bit seed.
pub fn rng_from(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}
