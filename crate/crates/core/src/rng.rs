//! Seeded pseudo-random streams.
//!
//! Every random decision in the crate (splits, shuffles, weight init, member
//! seeds) goes through this module so that results are reproducible bit for
//! bit in any language that implements the same three rules:
//!
//! * `splitmix64(x)`: `z = x + 0x9E3779B97F4A7C15`,
//!   `z = (z ^ z>>30) * 0xBF58476D1CE4E5B9`, `z = (z ^ z>>27) * 0x94D049BB133111EB`,
//!   result `z ^ z>>31` (all arithmetic wrapping mod 2^64).
//! * `XorShift64Star` state update: `s ^= s>>12; s ^= s<<25; s ^= s>>27`, output
//!   `s * 0x2545F4914F6CDD1D`. The initial state is `splitmix64(seed)`, replaced
//!   by `0x9E3779B97F4A7C15` if that is zero.
//! * `derive_seed(base, stream) = splitmix64(splitmix64(base) ^ stream)`.
//!
//! Uniform reals take the top 53 bits: `(next >> 11) · 2^-53`. Bounded integers
//! use the multiply-high rule `(next · n) >> 64` (no rejection step).

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent child seed for a numbered sub-stream of `base`.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    splitmix64(splitmix64(base) ^ stream)
}

/// Stream identifiers used with [`derive_seed`] across the crate.
pub mod streams {
    pub const SPLIT_TRAIN: u64 = 1;
    pub const SPLIT_TEST: u64 = 2;
    pub const WEIGHT_INIT: u64 = 3;
    pub const SHUFFLE: u64 = 4;
    pub const BOOTSTRAP: u64 = 5;
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct XorShift64Star {
    state: u64,
}

impl XorShift64Star {
    pub fn new(seed: u64) -> Self {
        let s = splitmix64(seed);
        Self { state: if s == 0 { GOLDEN } else { s } }
    }

    pub fn next_u64(&mut self) -> u64 {
        let mut s = self.state;
        s ^= s >> 12;
        s ^= s << 25;
        s ^= s >> 27;
        self.state = s;
        s.wrapping_mul(0x2545_F491_4F6C_DD1D)
    }

    /// Uniform in `[0, 1)`.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Integer in `0..n`. `n` must be positive.
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    /// Fisher–Yates, swapping from the back.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }

    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        self.shuffle(&mut idx);
        idx
    }
}
