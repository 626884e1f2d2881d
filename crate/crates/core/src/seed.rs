//! Named random substreams derived from a single run seed.
//!
//! Each stream is a ChaCha8 generator keyed by SHA-256 over the seed, the
//! stream name and an optional index, so adding a new stream never perturbs
//! an existing one and per-item streams are independent of evaluation order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub const BOOTSTRAP: &str = "bootstrap";
pub const GLOBAL_SUBSET: &str = "global-subset";
pub const RANDOM_BASELINE: &str = "random-baseline";
pub const PERMUTATION: &str = "permutation";
pub const EFFICIENCY: &str = "efficiency";

pub fn substream(seed: u64, name: &str) -> ChaCha8Rng {
    keyed(seed, name, &[])
}

pub fn indexed_substream(seed: u64, name: &str, index: u64) -> ChaCha8Rng {
    keyed(seed, name, &index.to_le_bytes())
}

pub fn keyed_substream(seed: u64, name: &str, key: &str) -> ChaCha8Rng {
    keyed(seed, name, key.as_bytes())
}

fn keyed(seed: u64, name: &str, key: &[u8]) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update((name.len() as u64).to_le_bytes());
    hasher.update(name.as_bytes());
    hasher.update(key);
    ChaCha8Rng::from_seed(hasher.finalize().into())
}
