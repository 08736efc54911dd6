//! Seeded, portable random streams.
//!
//! Every stochastic step uses ChaCha8 seeded from a SHA-256 digest, so a
//! dataset generated on one machine is reproduced bit-for-bit on another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type Rng = ChaCha8Rng;

/// Stream keyed by a numeric base and a string label (typically an image id).
pub fn stream(base: u64, label: &str) -> Rng {
    let mut hasher = Sha256::new();
    hasher.update(base.to_le_bytes());
    hasher.update((label.len() as u64).to_le_bytes());
    hasher.update(label.as_bytes());
    let digest = hasher.finalize();
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(seed)
}

/// Stream keyed by a base seed and a small integer sub-stream index.
pub fn substream(base: u64, index: u64) -> Rng {
    stream(base, &format!("#{index}"))
}
