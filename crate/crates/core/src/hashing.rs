//! Seeded hash family mapping client identities to sketch positions.
//!
//! A position is the number of trailing zero bits of a 64-bit xxh3 word, so
//! position `k` is hit with probability `2^-(k+1)`. Mass beyond the last
//! position is folded into `W - 1`.
//!
//! The hash is not keyed: a client that can choose its own identity can also
//! choose its position. Deployments facing adversarial clients should derive
//! identities server-side.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use xxhash_rust::xxh3::Xxh3;

use crate::{Error, Result, MAX_WIDTH};

/// Seed selecting one member of the hash family. Each ensemble row owns one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct HashSeed(pub u64);

/// Zero-based sketch position, always below the sketch width.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Position(u32);

impl Position {
    pub fn index(self) -> u32 {
        self.0
    }
}

/// Hashes `client_id` under `seed`. The seed is fed to the hasher as eight
/// little-endian bytes ahead of the identity.
pub fn hash_client(client_id: &[u8], seed: HashSeed) -> u64 {
    let mut hasher = Xxh3::new();
    hasher.update(&seed.0.to_le_bytes());
    hasher.update(client_id);
    hasher.digest()
}

/// Maps a raw hash word to a position: trailing zeros, clamped to `width - 1`.
pub fn position_from_hash(word: u64, width: u32) -> Position {
    debug_assert!((1..=MAX_WIDTH).contains(&width));
    Position(word.trailing_zeros().min(width - 1))
}

pub fn position_of(client_id: &[u8], seed: HashSeed, width: u32) -> Result<Position> {
    if client_id.is_empty() {
        return Err(Error::invalid("client id must be non-empty"));
    }
    check_width(width)?;
    Ok(position_from_hash(hash_client(client_id, seed), width))
}

/// Derives `k` pairwise distinct row seeds from one base seed.
pub fn derive_seeds(base: u64, k: usize) -> Vec<HashSeed> {
    let mut rng = ChaCha8Rng::seed_from_u64(base);
    let mut seen = HashSet::with_capacity(k);
    let mut seeds = Vec::with_capacity(k);
    while seeds.len() < k {
        let s: u64 = rng.random();
        if seen.insert(s) {
            seeds.push(HashSeed(s));
        }
    }
    seeds
}

pub(crate) fn check_width(width: u32) -> Result<()> {
    if (1..=MAX_WIDTH).contains(&width) {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "width must be in 1..={MAX_WIDTH}, got {width}"
        )))
    }
}
