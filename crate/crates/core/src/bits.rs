//! Finite binary strings.
//!
//! [`BitString`] is the basic currency of the whole crate: tree nodes,
//! functional oracles, and functional outputs are all finite strings over
//! {0,1}. Strings are packed into 64-bit words and stay inline (no heap)
//! up to 64 bits.

use std::fmt;
use std::str::FromStr;

use serde::{de, Deserialize, Deserializer, Serialize, Serializer};
use smallvec::SmallVec;

/// A finite sequence over {0,1}.
///
/// The prefix relation is a partial order with the empty string below
/// everything. `Ord` is lexicographic with a proper prefix ordered before
/// its extensions, so equal-length strings sort in the usual binary order.
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct BitString {
    len: u32,
    words: SmallVec<[u64; 1]>,
}

impl BitString {
    pub fn empty() -> Self {
        BitString::default()
    }

    pub fn len(&self) -> u32 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Bit at position `i` as 0 or 1. Panics if out of range.
    pub fn get(&self, i: u32) -> u8 {
        assert!(i < self.len, "bit index {i} out of range for length {}", self.len);
        ((self.words[(i / 64) as usize] >> (i % 64)) & 1) as u8
    }

    pub fn push(&mut self, bit: u8) {
        debug_assert!(bit <= 1);
        if self.len.is_multiple_of(64) {
            self.words.push(0);
        }
        if bit != 0 {
            let idx = (self.len / 64) as usize;
            self.words[idx] |= 1u64 << (self.len % 64);
        }
        self.len += 1;
    }

    /// A copy of `self` with one more bit at the end.
    pub fn extended(&self, bit: u8) -> Self {
        let mut out = self.clone();
        out.push(bit);
        out
    }

    /// The string `bit ⌢ self` (one bit prepended).
    pub fn prepended(&self, bit: u8) -> Self {
        let mut out = BitString::empty();
        out.push(bit);
        for i in 0..self.len {
            out.push(self.get(i));
        }
        out
    }

    /// The initial segment of length `n`. Panics if `n` exceeds the length.
    pub fn prefix(&self, n: u32) -> Self {
        assert!(n <= self.len);
        let mut words: SmallVec<[u64; 1]> =
            self.words[..(n as usize).div_ceil(64)].iter().copied().collect();
        if !n.is_multiple_of(64) {
            if let Some(last) = words.last_mut() {
                *last &= (1u64 << (n % 64)) - 1;
            }
        }
        BitString { len: n, words }
    }

    /// Everything after the first bit. Panics on the empty string.
    pub fn tail(&self) -> Self {
        assert!(self.len > 0);
        let mut out = BitString::empty();
        for i in 1..self.len {
            out.push(self.get(i));
        }
        out
    }

    pub fn is_prefix_of(&self, other: &BitString) -> bool {
        self.len <= other.len && *self == other.prefix(self.len)
    }

    pub fn bits(&self) -> impl Iterator<Item = u8> + '_ {
        (0..self.len).map(move |i| self.get(i))
    }

    pub fn from_bits<I: IntoIterator<Item = u8>>(bits: I) -> Self {
        let mut out = BitString::empty();
        for b in bits {
            out.push(b);
        }
        out
    }

    /// All strings of the given length, in lexicographic order.
    pub fn all_of_length(len: u32) -> Vec<BitString> {
        let mut out = vec![BitString::empty()];
        for _ in 0..len {
            let mut next = Vec::with_capacity(out.len() * 2);
            for s in &out {
                next.push(s.extended(0));
                next.push(s.extended(1));
            }
            out = next;
        }
        out
    }

    /// The string whose even positions come from `even` and odd positions
    /// from `odd`. Requires `even.len() == odd.len()` or
    /// `even.len() == odd.len() + 1`, the only shapes a de-interleave can
    /// produce.
    pub fn interleave(even: &BitString, odd: &BitString) -> BitString {
        assert!(
            even.len == odd.len || even.len == odd.len + 1,
            "interleave requires |even| ∈ {{|odd|, |odd|+1}}, got {} and {}",
            even.len,
            odd.len
        );
        let mut out = BitString::empty();
        for i in 0..even.len + odd.len {
            if i % 2 == 0 {
                out.push(even.get(i / 2));
            } else {
                out.push(odd.get(i / 2));
            }
        }
        out
    }

    /// The subsequence at even positions.
    pub fn even_part(&self) -> BitString {
        BitString::from_bits((0..self.len).step_by(2).map(|i| self.get(i)))
    }

    /// The subsequence at odd positions.
    pub fn odd_part(&self) -> BitString {
        BitString::from_bits((1..self.len).step_by(2).map(|i| self.get(i)))
    }
}

impl PartialOrd for BitString {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for BitString {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        let common = self.len.min(other.len);
        for i in 0..common {
            match self.get(i).cmp(&other.get(i)) {
                std::cmp::Ordering::Equal => {}
                ord => return ord,
            }
        }
        self.len.cmp(&other.len)
    }
}

impl fmt::Display for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.bits() {
            write!(f, "{}", b)?;
        }
        Ok(())
    }
}

impl fmt::Debug for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_empty() {
            write!(f, "ε")
        } else {
            write!(f, "\"{}\"", self)
        }
    }
}

/// Parses from "0"/"1" text; the empty string parses to ε.
impl FromStr for BitString {
    type Err = ParseBitStringError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut out = BitString::empty();
        for c in s.chars() {
            match c {
                '0' => out.push(0),
                '1' => out.push(1),
                other => return Err(ParseBitStringError(other)),
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid bit character {0:?} (expected '0' or '1')")]
pub struct ParseBitStringError(char);

impl Serialize for BitString {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for BitString {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(de::Error::custom)
    }
}
