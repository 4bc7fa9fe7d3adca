//! The pinned pseudo-random generator behind every seeded operation.
//!
//! The generator is xoshiro256** whose 256-bit state is filled by four
//! consecutive SplitMix64 outputs of the 64-bit seed. On top of the raw
//! `u64` stream the derived draws are fixed as follows, so that another
//! implementation following the same recipe reproduces datasets, initial
//! weights and shuffles bit for bit:
//!
//! - `uniform()`: `(next_u64() >> 11) * 2^-53`, in `[0, 1)`.
//! - `below(n)`: `((next_u64() as u128 * n) >> 64)`, in `[0, n)`.
//! - `standard_normal()`: Box–Muller cosine branch with
//!   `u1 = 1 - uniform()`, `u2 = uniform()`; the sine branch is discarded.
//! - `shuffle(slice)`: Fisher–Yates from the back, `j = below(i + 1)`.

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;

/// XORed into a run seed to derive the minibatch-shuffle stream, so shuffling
/// never reuses the draws that initialised the weights.
pub const SHUFFLE_STREAM: u64 = 0x5348_5546_464c_4531;

#[derive(Debug, Clone)]
pub struct Rng(Xoshiro256StarStar);

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng(Xoshiro256StarStar::seed_from_u64(seed))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `[0, n)`; `n` must be positive.
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    pub fn standard_normal(&mut self) -> f64 {
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}
