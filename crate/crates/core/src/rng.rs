//! Deterministic random streams.
//!
//! Every run owns its streams. The generator is ChaCha8 with 64-bit stream
//! selection, so one seed fans out into independent, reproducible streams
//! without any shared state.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Name recorded in run metadata.
pub const RNG_ALGORITHM: &str = "chacha8/rand_chacha-0.3/seed_from_u64";

#[derive(Debug, Clone)]
pub struct SeededRng {
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self::stream(seed, 0)
    }

    /// An independent stream derived from `seed`. Stream 0 is the one
    /// returned by [`SeededRng::new`].
    pub fn stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self { inner }
    }

    /// Uniform draw in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.gen::<f64>()
    }

    /// Uniform integer in `[0, bound)`. `bound` must be positive.
    pub fn below(&mut self, bound: usize) -> usize {
        assert!(bound > 0, "bounded draw with empty support");
        self.inner.gen_range(0..bound)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }
}

/// Stable per-purpose stream identifiers within one run seed.
pub mod streams {
    pub const SCHEDULE: u64 = 0;
    /// Training stream of task `i` is `TRAIN + i`.
    pub const TRAIN: u64 = 1;
    /// Evaluation stream of task `i` is `EVAL + i`.
    pub const EVAL: u64 = 1 << 32;
    /// Bootstrap resampling in experiment summaries.
    pub const BOOTSTRAP: u64 = 2 << 32;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_sequence() {
        let mut a = SeededRng::new(42);
        let mut b = SeededRng::new(42);
        for _ in 0..1000 {
            assert_eq!(a.uniform().to_bits(), b.uniform().to_bits());
            assert_eq!(a.below(17), b.below(17));
        }
    }

    #[test]
    fn different_seeds_diverge_early() {
        let mut a = SeededRng::new(1);
        let mut b = SeededRng::new(2);
        let first_diff = (0..100).find(|_| a.uniform() != b.uniform());
        assert!(first_diff.is_some());
    }

    #[test]
    fn bound_one_is_always_zero() {
        let mut rng = SeededRng::new(7);
        assert!((0..1000).all(|_| rng.below(1) == 0));
    }

    #[test]
    fn streams_are_distinct() {
        let mut a = SeededRng::stream(9, 1);
        let mut b = SeededRng::stream(9, 2);
        let xs: Vec<u64> = (0..8).map(|_| a.next_u64()).collect();
        let ys: Vec<u64> = (0..8).map(|_| b.next_u64()).collect();
        assert_ne!(xs, ys);
    }

    #[test]
    fn uniform_in_unit_interval() {
        let mut rng = SeededRng::new(3);
        assert!((0..10_000)
            .map(|_| rng.uniform())
            .all(|u| (0.0..1.0).contains(&u)));
    }

    // Frozen prefix: guards against silent changes in the generator or
    // the float conversion, which would break cross-platform replay.
    #[test]
    fn frozen_prefix() {
        let mut rng = SeededRng::new(42);
        let got: Vec<u64> = (0..3).map(|_| rng.next_u64()).collect();
        assert_eq!(
            got,
            vec![
                12578764544318200737,
                17529487244874322312,
                7886285670807131020
            ]
        );
    }
}
