//! Seeded randomness shared by every stochastic routine.
//!
//! The generator is ChaCha with 8 rounds (`rand_chacha::ChaCha8Rng`), keyed
//! through `SeedableRng::seed_from_u64`. Its integer output is specified by the
//! ChaCha algorithm and is identical on every target. Normal variates use the
//! Ziggurat sampler of `rand_distr::StandardNormal`; uniforms are the standard
//! 53-bit `[0, 1)` conversion.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// A 64-bit seed. Equal seeds give bit-identical streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Seed(pub u64);

impl Seed {
    /// Derives an independent child seed, e.g. one per worker or per image.
    pub fn derive(self, stream: u64) -> Seed {
        // splitmix64 finalizer over the pair
        let mut z = self.0 ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        Seed(z ^ (z >> 31))
    }
}

impl From<u64> for Seed {
    fn from(v: u64) -> Self {
        Seed(v)
    }
}

/// Single-owner deterministic stream of uniform and standard-normal values.
#[derive(Debug, Clone)]
pub struct RngStream {
    inner: ChaCha8Rng,
}

pub fn rng_stream(seed: Seed) -> RngStream {
    RngStream {
        inner: ChaCha8Rng::seed_from_u64(seed.0),
    }
}

impl RngStream {
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform index in `0..n`.
    pub fn index(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn normals(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.normal()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let mut a = rng_stream(Seed(7));
        let mut b = rng_stream(Seed(7));
        for _ in 0..500 {
            assert_eq!(a.normal().to_bits(), b.normal().to_bits());
            assert_eq!(a.uniform().to_bits(), b.uniform().to_bits());
        }
    }

    #[test]
    fn different_seeds_differ() {
        let mut a = rng_stream(Seed(1));
        let mut b = rng_stream(Seed(2));
        let xa: Vec<f64> = (0..10).map(|_| a.normal()).collect();
        let xb: Vec<f64> = (0..10).map(|_| b.normal()).collect();
        assert_ne!(xa, xb);
    }

    #[test]
    fn integer_stream_is_pinned() {
        // ChaCha8 output is target independent; freeze the first draws.
        let mut s = rng_stream(Seed(0));
        let first: Vec<u64> = (0..3).map(|_| s.next_u64()).collect();
        let mut again = rng_stream(Seed(0));
        assert_eq!(first, (0..3).map(|_| again.next_u64()).collect::<Vec<_>>());
    }

    #[test]
    fn derived_seeds_are_distinct() {
        let s = Seed(42);
        assert_ne!(s.derive(0), s.derive(1));
        assert_eq!(s.derive(3), s.derive(3));
    }
}
