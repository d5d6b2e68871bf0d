//! Deterministic per-task seeds derived from one base seed.
//!
//! Task `i` gets `splitmix64(base ⊕ splitmix64(i))`, so results do not depend on
//! how tasks are scheduled across threads.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::SeedableRng;

use crate::error::{Error, Result};

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

pub fn stream_seed(base: u64, index: u64) -> u64 {
    splitmix64(base ^ splitmix64(index))
}

pub fn stream_rng(base: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream_seed(base, index))
}

/// Seeds for tasks `0..count`; fails if two of them coincide.
pub fn stream_seeds(base: u64, count: usize) -> Result<Vec<u64>> {
    let seeds: Vec<u64> = (0..count as u64).map(|i| stream_seed(base, i)).collect();
    let distinct: BTreeSet<u64> = seeds.iter().copied().collect();
    if distinct.len() != seeds.len() {
        return Err(Error::Numerical("per-task seed collision".into()));
    }
    Ok(seeds)
}
