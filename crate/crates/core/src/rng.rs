//! Seeded random streams.
//!
//! Every random draw in the crate comes from a ChaCha stream keyed by
//! `(seed, index, purpose)`, so work can be split across threads without
//! changing results.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Split = 1,
    Generate = 2,
    Oracle = 3,
    Missingness = 4,
    Impute = 5,
    Folds = 6,
    Replicate = 7,
}

/// Independent generator for `(seed, index, purpose)`.
pub fn stream_rng(seed: u64, index: u64, purpose: Purpose) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((index << 8) | purpose as u64);
    rng
}

/// A child seed for `(seed, index, purpose)`, for APIs that take a plain seed.
pub fn derive_seed(seed: u64, index: u64, purpose: Purpose) -> u64 {
    stream_rng(seed, index, purpose).next_u64()
}
