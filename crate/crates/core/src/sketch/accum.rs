//! Order-independent exact summation.
//!
//! Each `f64` term is truncated onto a fixed-point grid with spacing
//! `2^-160` and added into five carry-save 64-bit words held in `i128`s.
//! Integer addition is associative, so the accumulated value depends only on
//! the multiset of terms, never on their arrival order or on how the terms
//! were split across shards. Terms of magnitude `>= 2^148` (about `3.6e44`) are rejected.

use crate::error::{Error, Result};

const WORDS: usize = 5;
const WORD_BITS: u32 = 64;
/// Bit position of `2^0` within the fixed-point integer.
const POINT: i64 = 160;
/// Largest word index at which a 53-bit mantissa may start.
const MAX_START_WORD: i64 = WORDS as i64 - 2;

/// Each add moves a word by less than `2^64`, so the `i128` words cannot
/// overflow before `2^63` additions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ExactSum {
    words: [i128; WORDS],
}

impl ExactSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) -> Result<()> {
        let bits = x.to_bits();
        let exp = ((bits >> 52) & 0x7ff) as i64;
        if exp == 0 {
            // zero or subnormal: far below the grid
            return Ok(());
        }
        let mut mant = (bits & ((1 << 52) - 1)) | (1 << 52);
        let mut pos = exp - 1075 + POINT;
        if pos < 0 {
            let shift = -pos;
            if shift >= 64 {
                return Ok(());
            }
            mant >>= shift;
            pos = 0;
        }
        let word = pos >> 6;
        if word > MAX_START_WORD {
            return Err(Error::AccumulatorRange(x));
        }
        let word = word as usize;
        let shifted = (mant as u128) << (pos & 63);
        // Branch-free conditional negation; signs of sketch terms are random.
        let neg = -((bits >> 63) as i128);
        let lo = ((shifted as u64) as i128 ^ neg) - neg;
        let hi = ((shifted >> 64) as i128 ^ neg) - neg;
        let w = &mut self.words[word..word + 2];
        w[0] += lo;
        w[1] += hi;
        Ok(())
    }

    /// Canonical form: all but the top word in `[0, 2^64)`, sign carried by the top word.
    fn normalize(&mut self) {
        for k in 0..WORDS - 1 {
            let carry = self.words[k] >> WORD_BITS;
            self.words[k] -= carry << WORD_BITS;
            self.words[k + 1] += carry;
        }
    }

    pub fn merge(&mut self, other: &ExactSum) {
        self.normalize();
        let mut o = *other;
        o.normalize();
        for k in 0..WORDS {
            self.words[k] += o.words[k];
        }
        self.normalize();
    }

    /// Rounds the accumulated value to the nearest-ish `f64` (within a couple
    /// of ulps). The result is a function of the canonical words only.
    pub fn value(&self) -> f64 {
        let mut c = *self;
        c.normalize();
        // Work on the magnitude so no cancellation happens between words.
        let negative = c.words[WORDS - 1] < 0;
        if negative {
            for l in c.words.iter_mut() {
                *l = -*l;
            }
            c.normalize();
        }
        let mut acc = 0.0f64;
        for k in (0..WORDS).rev() {
            let scale = (WORD_BITS as i64 * k as i64 - POINT) as i32;
            acc += c.words[k] as f64 * 2f64.powi(scale);
        }
        if negative {
            -acc
        } else {
            acc
        }
    }

    pub fn is_zero(&self) -> bool {
        let mut c = *self;
        c.normalize();
        c.words.iter().all(|&l| l == 0)
    }
}
