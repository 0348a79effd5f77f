//! Seeded randomness with bit-stable streams.
//!
//! Everything downstream (init, latent noise, shuffles, splits) draws from
//! ChaCha8 through the helpers here. Distribution code is deliberately
//! hand-rolled on top of the raw u64 stream so that byte-exact outputs do
//! not depend on any external crate's sampling internals.

use alloc::vec::Vec;
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// splitmix64 finalizer; used to derive independent sub-seeds.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Derives the seed for a named sub-stream of a run seed.
pub fn derive_seed(seed: u64, domain: u64) -> u64 {
    mix64(seed ^ mix64(domain))
}

/// Fixed sub-stream names. Every consumer of randomness derives its own
/// stream from the run seed and one of these, so adding a consumer never
/// shifts the draws of another.
pub mod domains {
    /// Parameter initialization.
    pub const INIT: u64 = 0x01;
    /// Latent noise during training.
    pub const TRAIN_EPS: u64 = 0x02;
    /// Per-epoch batch shuffles (further mixed with the epoch number).
    pub const BATCH: u64 = 0x03;
    /// Latent noise during evaluation.
    pub const EVAL_EPS: u64 = 0x04;
}

pub struct DetRng {
    seed: u64,
    rng: ChaCha8Rng,
}

impl DetRng {
    pub fn new(seed: u64) -> Self {
        DetRng { seed, rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    /// (seed, position) pair that fully reconstructs the stream state.
    pub fn state(&self) -> (u64, u128) {
        (self.seed, self.rng.get_word_pos())
    }

    pub fn restore(seed: u64, word_pos: u128) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_word_pos(word_pos);
        DetRng { seed, rng }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform in [0, 1) with 53 random bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in [lo, hi).
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Standard normal via Box-Muller; consumes exactly two u64 draws.
    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.next_f64(); // (0, 1], keeps ln finite
        let u2 = self.next_f64();
        libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(2.0 * core::f64::consts::PI * u2)
    }

    pub fn fill_normal(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.normal()).collect()
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = (self.next_u64() % (i as u64 + 1)) as usize;
            items.swap(i, j);
        }
    }

    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut p: Vec<usize> = (0..n).collect();
        self.shuffle(&mut p);
        p
    }
}
