//! Pinned pseudo-random source.
//!
//! All randomness (weight init, dropout masks, epoch shuffles) flows through
//! [`SeededRng`], a PCG-XSH-RR 64/32 generator (`rand_pcg::Pcg32`, 64-bit
//! state plus a 64-bit stream selector). Integer and float derivations are
//! done here rather than through `rand` distributions so the streams do not
//! shift when a dependency changes its sampling algorithms.

use rand_core::Rng;
use rand_pcg::Pcg32;

/// Stream selectors keep the independent uses of one seed apart.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Init,
    Dropout,
    Shuffle { epoch: u32 },
    Test,
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::Init => 0x1000,
            Stream::Dropout => 0x2000,
            Stream::Test => 0x3000,
            Stream::Shuffle { epoch } => 0x1_0000_0000 | epoch as u64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeededRng {
    inner: Pcg32,
}

impl SeededRng {
    pub fn new(seed: u64, stream: Stream) -> Self {
        Self {
            inner: Pcg32::new(seed ^ 0x853c_49e6_748f_ea9b, stream.id()),
        }
    }

    pub fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[-bound, bound]`.
    pub fn symmetric(&mut self, bound: f64) -> f64 {
        (2.0 * self.next_f64() - 1.0) * bound
    }

    /// Unbiased integer in `0..n` (rejection sampling on 64 bits).
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "below(0)");
        let zone = u64::MAX - (u64::MAX % n) - 1;
        loop {
            let x = self.next_u64();
            if x <= zone {
                return x % n;
            }
        }
    }

    /// In-place Fisher-Yates shuffle (Durstenfeld, descending index).
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}
