//! Deterministic, counter-based random sampling.
//!
//! Dataset reproducibility requires that sample `i` of a run depends only on
//! `(master_seed, i)`, never on scheduling or generation order. Each sample
//! therefore gets its own stream cipher RNG whose key is derived from the
//! master seed and the sample index by a SplitMix64 expansion.

use rand_chacha::ChaCha12Rng;
use rand_core::{RngCore, SeedableRng};

/// Name and version of the seeding scheme, recorded in dataset manifests so
/// future readers can reproduce samples byte-for-byte.
pub const RNG_SCHEME: &str = "chacha12/splitmix64-v1";

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Per-sample random source. Construction is a pure function of
/// `(master_seed, index)`.
pub struct SampleRng {
    inner: ChaCha12Rng,
}

impl SampleRng {
    /// Derives the stream for sample `index` under `master_seed`.
    pub fn for_sample(master_seed: u64, index: u64) -> Self {
        let mut state = master_seed ^ index.wrapping_mul(0xa076_1d64_78bd_642f);
        let mut seed = [0u8; 32];
        for chunk in seed.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        Self {
            inner: ChaCha12Rng::from_seed(seed),
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform double in [0, 1) with the full 53-bit mantissa.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform draw from [lo, hi].
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Log-uniform draw from [lo, hi]; both bounds must be positive.
    pub fn log_uniform(&mut self, lo: f64, hi: f64) -> f64 {
        debug_assert!(lo > 0.0 && hi >= lo);
        (self.uniform(lo.ln(), hi.ln())).exp()
    }

    /// Picks an index with probability proportional to `weights[i]`.
    pub fn pick_weighted(&mut self, weights: &[f64]) -> usize {
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return 0;
        }
        let mut target = self.next_f64() * total;
        for (i, w) in weights.iter().enumerate() {
            target -= w;
            if target < 0.0 {
                return i;
            }
        }
        weights.len() - 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_and_index_reproduce_the_stream() {
        let mut a = SampleRng::for_sample(42, 7);
        let mut b = SampleRng::for_sample(42, 7);
        for _ in 0..32 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn different_indices_give_different_streams() {
        let mut a = SampleRng::for_sample(42, 0);
        let mut b = SampleRng::for_sample(42, 1);
        let same = (0..16).filter(|_| a.next_u64() == b.next_u64()).count();
        assert_eq!(same, 0, "adjacent sample streams should not collide");
    }

    #[test]
    fn different_seeds_give_different_streams() {
        let mut a = SampleRng::for_sample(1, 5);
        let mut b = SampleRng::for_sample(2, 5);
        assert_ne!(a.next_u64(), b.next_u64());
    }

    #[test]
    fn next_f64_stays_in_unit_interval() {
        let mut rng = SampleRng::for_sample(0, 0);
        for _ in 0..1000 {
            let v = rng.next_f64();
            assert!((0.0..1.0).contains(&v), "got {v}");
        }
    }

    #[test]
    fn uniform_respects_bounds() {
        let mut rng = SampleRng::for_sample(3, 3);
        for _ in 0..1000 {
            let v = rng.uniform(-2.5, 4.0);
            assert!((-2.5..=4.0).contains(&v), "got {v}");
        }
    }

    #[test]
    fn log_uniform_respects_bounds() {
        let mut rng = SampleRng::for_sample(4, 4);
        for _ in 0..1000 {
            let v = rng.log_uniform(1e-3, 1e-2);
            assert!((1e-3..=1e-2).contains(&v), "got {v}");
        }
    }

    #[test]
    fn pick_weighted_honors_zero_weights() {
        let mut rng = SampleRng::for_sample(5, 5);
        for _ in 0..200 {
            assert_eq!(rng.pick_weighted(&[1.0, 0.0, 0.0]), 0);
            assert_eq!(rng.pick_weighted(&[0.0, 0.0, 3.0]), 2);
        }
    }

    #[test]
    fn pick_weighted_reaches_every_positive_weight() {
        let mut rng = SampleRng::for_sample(6, 6);
        let mut seen = [false; 3];
        for _ in 0..500 {
            seen[rng.pick_weighted(&[0.4, 0.3, 0.3])] = true;
        }
        assert_eq!(seen, [true; 3]);
    }

    #[test]
    fn pick_weighted_degenerate_total_falls_back_to_zero() {
        let mut rng = SampleRng::for_sample(7, 7);
        assert_eq!(rng.pick_weighted(&[0.0, 0.0]), 0);
    }
}
