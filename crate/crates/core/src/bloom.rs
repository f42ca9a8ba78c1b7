//! Fixed-width bloom filter with double-hashed probes.
//!
//! Probe positions come from one SHA-256 digest of the key: the first 16
//! bytes give `h1`, the last 16 give `h2` (both little-endian), and probe `j`
//! is `(h1 + j * h2) mod m`. The arithmetic is exact, so positions are
//! identical on every platform.

use crate::digest::digest;
use crate::error::{Error, Result};

pub const DEFAULT_BITS: usize = 1024;
pub const DEFAULT_HASHES: u32 = 7;

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BloomFilter {
    words: Vec<u64>,
    m: usize,
    k: u32,
}

impl std::fmt::Debug for BloomFilter {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BloomFilter")
            .field("m", &self.m)
            .field("k", &self.k)
            .field("popcount", &self.popcount())
            .finish()
    }
}

/// Bit positions a key maps to in a filter of `m` bits with `k` probes.
pub fn probe_positions(key: &[u8], m: usize, k: u32) -> impl Iterator<Item = usize> {
    let d = digest(key);
    let h1 = u128::from_le_bytes(d.0[..16].try_into().expect("16 bytes"));
    let h2 = u128::from_le_bytes(d.0[16..].try_into().expect("16 bytes"));
    let m128 = m as u128;
    let (a, b) = (h1 % m128, h2 % m128);
    (0..k as u128).map(move |j| ((a + j * b) % m128) as usize)
}

impl BloomFilter {
    pub fn new(m: usize, k: u32) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidBloom("bit count must be positive".into()));
        }
        if k == 0 {
            return Err(Error::InvalidBloom("hash count must be at least 1".into()));
        }
        Ok(BloomFilter {
            words: vec![0; m.div_ceil(64)],
            m,
            k,
        })
    }

    pub fn bits(&self) -> usize {
        self.m
    }

    pub fn hashes(&self) -> u32 {
        self.k
    }

    pub fn same_params(&self, other: &BloomFilter) -> bool {
        self.m == other.m && self.k == other.k
    }

    fn check_params(&self, other: &BloomFilter) -> Result<()> {
        if !self.same_params(other) {
            return Err(Error::BloomMismatch {
                m1: self.m,
                k1: self.k,
                m2: other.m,
                k2: other.k,
            });
        }
        Ok(())
    }

    pub fn insert(&mut self, key: &[u8]) {
        for pos in probe_positions(key, self.m, self.k) {
            self.words[pos / 64] |= 1 << (pos % 64);
        }
    }

    /// `false` means the key was never inserted; `true` means possibly present.
    pub fn contains(&self, key: &[u8]) -> bool {
        probe_positions(key, self.m, self.k).all(|pos| self.bit(pos))
    }

    pub fn bit(&self, pos: usize) -> bool {
        pos < self.m && self.words[pos / 64] & (1 << (pos % 64)) != 0
    }

    pub fn union(&self, other: &BloomFilter) -> Result<BloomFilter> {
        let mut out = self.clone();
        out.union_with(other)?;
        Ok(out)
    }

    /// In-place bitwise OR.
    pub fn union_with(&mut self, other: &BloomFilter) -> Result<()> {
        self.check_params(other)?;
        for (w, o) in self.words.iter_mut().zip(&other.words) {
            *w |= o;
        }
        Ok(())
    }

    pub fn popcount(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn byte_len(m: usize) -> usize {
        m.div_ceil(8)
    }

    /// Bit `i` lives in byte `i / 8` at mask `1 << (i % 8)`.
    pub fn write_bytes(&self, out: &mut Vec<u8>) {
        let n = Self::byte_len(self.m);
        out.extend(self.words.iter().flat_map(|w| w.to_le_bytes()).take(n));
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(Self::byte_len(self.m));
        self.write_bytes(&mut out);
        out
    }

    /// Inverse of [`to_bytes`](Self::to_bytes); padding bits past `m` must be zero.
    pub fn from_bytes(bytes: &[u8], m: usize, k: u32) -> Result<Self> {
        let mut f = BloomFilter::new(m, k)?;
        if bytes.len() != Self::byte_len(m) {
            return Err(Error::Decode(format!(
                "bloom filter needs {} bytes, got {}",
                Self::byte_len(m),
                bytes.len()
            )));
        }
        for (i, chunk) in bytes.chunks(8).enumerate() {
            let mut buf = [0u8; 8];
            buf[..chunk.len()].copy_from_slice(chunk);
            f.words[i] = u64::from_le_bytes(buf);
        }
        if !m.is_multiple_of(64) {
            let last = f.words.len() - 1;
            if f.words[last] >> (m % 64) != 0 {
                return Err(Error::Decode("bloom padding bits set".into()));
            }
        }
        Ok(f)
    }
}
