//! Deterministic counter-based pseudorandom generator.
//!
//! The generator is SplitMix64: a 64-bit counter advanced by a fixed odd
//! increment, with the output finalized by a mixing function. The same seed
//! produces the same stream on every platform, which is what makes parameter
//! initialization, shuffles, and synthetic corpora reproducible bit for bit.

/// SplitMix64 stream over a 64-bit counter.
#[derive(Debug, Clone)]
pub struct Rng {
    state: u64,
}

const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a sub-seed from a base seed and a fixed stream id, so that one run
/// seed can drive several independent streams (init, shuffle, corpus, ...).
pub fn sub_seed(seed: u64, stream: u64) -> u64 {
    mix(seed ^ mix(stream.wrapping_mul(GAMMA)))
}

/// Fixed stream ids used to derive per-purpose sub-seeds from a run seed.
pub mod streams {
    pub const INIT: u64 = 1;
    pub const SHUFFLE: u64 = 2;
    pub const WORD_TABLE: u64 = 3;
    pub const CORPUS: u64 = 4;
    pub const DROPOUT: u64 = 5;
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng { state: seed }
    }

    /// New generator on the sub-stream `stream` of `seed`.
    pub fn from_stream(seed: u64, stream: u64) -> Self {
        Rng::new(sub_seed(seed, stream))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GAMMA);
        mix(self.state)
    }

    /// Uniform in [0, 1) with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in [lo, hi).
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform integer in [0, n). Rejection sampling keeps it unbiased.
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

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.next_below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}
