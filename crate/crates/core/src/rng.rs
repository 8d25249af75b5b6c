//! The pinned pseudo-random generator behind every seeded choice in the crate.
//!
//! Sequences are meant to be reproducible from other languages, so the
//! whole pipeline is fixed here:
//!
//! * **Generator**: xoshiro256** (`rand_xoshiro::Xoshiro256StarStar`). A
//!   64-bit seed is expanded into the 256-bit state by four successive
//!   SplitMix64 outputs (state increment `0x9E3779B97F4A7C15`, finalizer
//!   multipliers `0xBF58476D1CE4E5B9` / `0x94D049BB133111EB`).
//! * **Bounded integers**: [`below`] maps one 64-bit output `x` to
//!   `(x * n) >> 64` and rejects when the low half is below `2^64 mod n`
//!   (Lemire's unbiased multiply-shift).
//! * **Shuffles**: [`shuffle`] is the descending Fisher-Yates walk: for
//!   `i = n-1, ..., 1` swap element `i` with element `below(i + 1)`.
//! * **Seed composition**: [`compose_seed`] mixes a base seed with a run
//!   index through the SplitMix64 finalizer.

use rand::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;

pub type StreamRng = Xoshiro256StarStar;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// A generator seeded through SplitMix64.
pub fn seeded(seed: u64) -> StreamRng {
    Xoshiro256StarStar::seed_from_u64(seed)
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Combines a base seed and a run index into one 64-bit seed.
pub fn compose_seed(base: u64, index: u64) -> u64 {
    mix64(base ^ mix64(index.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
}

/// Uniform integer in `[0, n)`. `n` must be nonzero.
pub fn below<R: RngCore + ?Sized>(rng: &mut R, n: u64) -> u64 {
    assert!(n > 0, "below(0)");
    let mut m = u128::from(rng.next_u64()) * u128::from(n);
    let mut low = m as u64;
    if low < n {
        let threshold = n.wrapping_neg() % n;
        while low < threshold {
            m = u128::from(rng.next_u64()) * u128::from(n);
            low = m as u64;
        }
    }
    (m >> 64) as u64
}

pub fn below_usize<R: RngCore + ?Sized>(rng: &mut R, n: usize) -> usize {
    below(rng, n as u64) as usize
}

/// In-place Fisher-Yates shuffle.
pub fn shuffle<T, R: RngCore + ?Sized>(rng: &mut R, items: &mut [T]) {
    for i in (1..items.len()).rev() {
        let j = below_usize(rng, i + 1);
        items.swap(i, j);
    }
}

/// `m` distinct indices drawn uniformly from `0..n`, in draw order.
///
/// Runs the first `m` steps of an ascending Fisher-Yates walk over `0..n`.
pub fn sample_indices<R: RngCore + ?Sized>(rng: &mut R, n: usize, m: usize) -> Vec<usize> {
    let m = m.min(n);
    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..m {
        let j = i + below_usize(rng, n - i);
        pool.swap(i, j);
    }
    pool.truncate(m);
    pool
}
