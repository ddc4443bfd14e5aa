//! Reproducible seed derivation.
//!
//! Every random stream is a ChaCha8 generator (`rand_chacha::ChaCha8Rng`,
//! 8-round ChaCha, value-stable across platforms) seeded with
//! `derive_seed(master, tag, index)`: the first eight bytes (little endian) of
//! `SHA-256(master_le || tag || 0x00 || index_le)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub const TAG_ARRIVAL: &str = "arrival";
pub const TAG_PERMUTATION: &str = "perm";
pub const TAG_RATE: &str = "rate";

pub fn derive_seed(master: u64, tag: &str, index: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(tag.as_bytes());
    h.update([0u8]);
    h.update(index.to_le_bytes());
    let digest = h.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Hex SHA-256 over the bit patterns of a list of `f64` lists.
pub fn fingerprint<'a>(lists: impl IntoIterator<Item = &'a [f64]>) -> String {
    let mut h = Sha256::new();
    for list in lists {
        h.update((list.len() as u64).to_le_bytes());
        for x in list {
            h.update(x.to_bits().to_le_bytes());
        }
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}
