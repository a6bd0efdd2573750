//! Pinned pseudo-random generator.
//!
//! Every stochastic choice in the crate goes through [`SeededRng`], so a seed
//! fully determines an experiment. The algorithm is fixed and documented so the
//! same streams can be reproduced outside Rust:
//!
//! - state: xoshiro256** seeded from a `u64` by four successive SplitMix64
//!   outputs (increment `0x9E3779B97F4A7C15`);
//! - `next_f64`: `(x >> 11) * 2^-53`, uniform on `[0, 1)`;
//! - `below(n)`: Lemire's multiply-shift with rejection on the low word;
//! - `bernoulli(p)`: `next_f64() < p`;
//! - `categorical(w)`: one `next_f64()` scaled by the total weight, then a
//!   linear scan of the cumulative sums (last positive entry on round-off).
//!
//! Sub-streams are derived with [`SeededRng::derive_seed`].

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug, Clone)]
pub struct SeededRng {
    inner: Xoshiro256StarStar,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: Xoshiro256StarStar::seed_from_u64(seed),
        }
    }

    /// Seed for an independent sub-stream `stream` of `seed`.
    pub fn derive_seed(seed: u64, stream: u64) -> u64 {
        splitmix64(seed ^ stream.wrapping_mul(GOLDEN_GAMMA))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `0..n`. Panics when `n == 0`.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        let n = n as u64;
        let threshold = n.wrapping_neg() % n;
        loop {
            let m = (self.next_u64() as u128) * (n as u128);
            if (m as u64) >= threshold {
                return (m >> 64) as usize;
            }
        }
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.next_f64() < p
    }

    /// Index drawn proportionally to non-negative `weights`.
    pub fn categorical(&mut self, weights: &[f64]) -> usize {
        let total: f64 = weights.iter().sum();
        debug_assert!(total > 0.0, "categorical over zero mass");
        let target = self.next_f64() * total;
        let mut acc = 0.0;
        let mut last_positive = 0;
        for (i, &w) in weights.iter().enumerate() {
            if w > 0.0 {
                last_positive = i;
                acc += w;
                if target < acc {
                    return i;
                }
            }
        }
        last_positive
    }
}

/// One SplitMix64 output for state `x` (the state is advanced first).
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
