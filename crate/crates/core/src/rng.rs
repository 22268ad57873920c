//! Deterministic random streams.
//!
//! Every random draw in the crate comes from a ChaCha8 generator
//! (`rand_chacha::ChaCha8Rng`) seeded with `seed_from_u64`. Sub-streams
//! (one per replication, per outcome table, ...) get their own 64-bit seed
//! from [`derive_seed`], a SplitMix64-based mix of the parent seed and the
//! stream index. A replication's randomness therefore depends only on
//! `(master seed, replication index)`, never on scheduling order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// The generator used throughout the crate.
pub type MrdRng = ChaCha8Rng;

/// SplitMix64 finalizer.
#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of sub-stream `stream` under `seed`.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    splitmix64(seed ^ splitmix64(stream.wrapping_add(0xA076_1D64_78BD_642F)))
}

pub fn rng_from_seed(seed: u64) -> MrdRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn stream_rng(seed: u64, stream: u64) -> MrdRng {
    rng_from_seed(derive_seed(seed, stream))
}

/// Uniform `k`-subset of `0..n` as an indicator vector, by a partial
/// Fisher–Yates shuffle of the index array.
pub fn sample_subset<R: Rng + ?Sized>(rng: &mut R, n: usize, k: usize) -> Vec<bool> {
    assert!(k <= n, "subset size {k} exceeds population {n}");
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = rng.random_range(i..n);
        idx.swap(i, j);
    }
    let mut out = vec![false; n];
    for &i in &idx[..k] {
        out[i] = true;
    }
    out
}

/// Uniform random permutation of `0..n` (full Fisher–Yates).
pub fn permutation<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        idx.swap(i, j);
    }
    idx
}
