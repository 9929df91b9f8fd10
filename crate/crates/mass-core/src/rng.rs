//! Deterministic 64-bit PRNG used everywhere randomness is needed.
//!
//! The generator is SplitMix64 (Steele, Lea & Flood's `splitmix64` step:
//! a Weyl sequence with increment 0x9E3779B97F4A7C15 fed through a
//! 64-bit finalizer). It is seedable from a single `u64`, has full-period
//! 2^64 state, and passes BigCrush for the use here (index sampling,
//! noise synthesis, weight init).
//!
//! Substreams: [`SplitMix64::substream`] derives an independent generator
//! from a parent seed and a stream tag by running the tag through the same
//! finalizer. Mask generation uses one substream per level (epoch, patch)
//! so each level's draws are reproducible in isolation.

/// SplitMix64 generator state.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    /// Derive an independent generator for (seed, tag).
    pub fn substream(seed: u64, tag: u64) -> Self {
        Self::new(mix64(seed ^ mix64(tag.wrapping_mul(GOLDEN_GAMMA).wrapping_add(1))))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix64(self.state)
    }

    /// Uniform in [0, 1) with 53 random bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in [0, n) by rejection (no modulo bias).
    pub fn next_below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "next_below(0)");
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let v = self.next_u64();
            if v < zone {
                return v % n;
            }
        }
    }

    /// Standard normal via Box-Muller.
    pub fn next_gaussian(&mut self) -> f64 {
        let u1 = loop {
            let u = self.next_f64();
            if u > 0.0 {
                break u;
            }
        };
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Sample `k` distinct indices from [0, n), returned sorted ascending.
    ///
    /// Partial Fisher-Yates over an index table; each k-subset is equally
    /// likely.
    pub fn sample_indices(&mut self, n: usize, k: usize) -> Vec<usize> {
        assert!(k <= n, "sample_indices: k={k} > n={n}");
        let mut idx: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = i + self.next_below((n - i) as u64) as usize;
            idx.swap(i, j);
        }
        let mut out = idx[..k].to_vec();
        out.sort_unstable();
        out
    }
}
