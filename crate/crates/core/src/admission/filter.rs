//! Membership filters over AS identifiers: an exact set and a Bloom filter
//! sharing one interface.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::types::AsId;

/// Filter construction parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FilterConfig {
    Exact,
    Bloom { bits: usize, hashes: u32 },
}

impl FilterConfig {
    /// Bloom filter sized for `expected` members at false-positive rate `fp`.
    pub fn bloom_for(expected: usize, fp: f64, hashes: u32) -> Self {
        let ln2 = std::f64::consts::LN_2;
        let bits = (-(expected as f64) * fp.ln() / (ln2 * ln2)).ceil() as usize;
        FilterConfig::Bloom {
            bits: bits.next_multiple_of(64),
            hashes,
        }
    }
}

impl Default for FilterConfig {
    /// 10^4 expected ASes, 1% false positives, 7 hash functions.
    fn default() -> Self {
        FilterConfig::bloom_for(10_000, 0.01, 7)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BloomFilter {
    words: Vec<u64>,
    bits: usize,
    hashes: u32,
}

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl BloomFilter {
    pub fn new(bits: usize, hashes: u32) -> Self {
        assert!(bits > 0 && hashes > 0);
        BloomFilter {
            words: vec![0; bits.div_ceil(64)],
            bits,
            hashes,
        }
    }

    fn positions(&self, id: AsId) -> impl Iterator<Item = usize> + '_ {
        // Kirsch-Mitzenmacher double hashing.
        let h1 = mix64(id.0 ^ 0x9e37_79b9_7f4a_7c15);
        let h2 = mix64(id.0.wrapping_add(0x632b_e59b_d9b4_e019)) | 1;
        (0..self.hashes as u64)
            .map(move |i| (h1.wrapping_add(i.wrapping_mul(h2)) % self.bits as u64) as usize)
    }

    pub fn insert(&mut self, id: AsId) {
        let pos: Vec<usize> = self.positions(id).collect();
        for p in pos {
            self.words[p / 64] |= 1 << (p % 64);
        }
    }

    pub fn contains(&self, id: AsId) -> bool {
        self.positions(id)
            .all(|p| self.words[p / 64] & (1 << (p % 64)) != 0)
    }

    pub fn clear(&mut self) {
        self.words.iter_mut().for_each(|w| *w = 0);
    }

    fn set_bits(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Fill-ratio cardinality estimate `-(m/k)·ln(1 - X/m)`, rounded up.
    fn estimate(bits: usize, hashes: u32, set: usize) -> u64 {
        if set == 0 {
            return 0;
        }
        if set >= bits {
            // Saturated: every bit set, the estimate diverges.
            return u64::MAX;
        }
        let m = bits as f64;
        (-(m / hashes as f64) * (1.0 - set as f64 / m).ln()).ceil() as u64
    }

    pub fn cardinality(&self) -> u64 {
        Self::estimate(self.bits, self.hashes, self.set_bits())
    }

    /// Cardinality of the union, estimated from the bitwise OR.
    pub fn union_cardinality(&self, other: &BloomFilter) -> u64 {
        assert_eq!((self.bits, self.hashes), (other.bits, other.hashes));
        let set = self
            .words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a | b).count_ones() as usize)
            .sum();
        Self::estimate(self.bits, self.hashes, set)
    }

    pub fn memory_bytes(&self) -> usize {
        self.words.len() * 8
    }
}

#[derive(Debug, Clone)]
pub enum MembershipFilter {
    Exact(HashSet<AsId>),
    Bloom(BloomFilter),
}

impl MembershipFilter {
    pub fn new(cfg: FilterConfig) -> Self {
        match cfg {
            FilterConfig::Exact => MembershipFilter::Exact(HashSet::new()),
            FilterConfig::Bloom { bits, hashes } => {
                MembershipFilter::Bloom(BloomFilter::new(bits, hashes))
            }
        }
    }

    pub fn insert(&mut self, id: AsId) {
        match self {
            MembershipFilter::Exact(s) => {
                s.insert(id);
            }
            MembershipFilter::Bloom(b) => b.insert(id),
        }
    }

    pub fn contains(&self, id: AsId) -> bool {
        match self {
            MembershipFilter::Exact(s) => s.contains(&id),
            MembershipFilter::Bloom(b) => b.contains(id),
        }
    }

    pub fn reset(&mut self) {
        match self {
            MembershipFilter::Exact(s) => s.clear(),
            MembershipFilter::Bloom(b) => b.clear(),
        }
    }

    pub fn union_cardinality(&self, other: &MembershipFilter) -> u64 {
        match (self, other) {
            (MembershipFilter::Exact(a), MembershipFilter::Exact(b)) => {
                (a.len() + b.iter().filter(|x| !a.contains(x)).count()) as u64
            }
            (MembershipFilter::Bloom(a), MembershipFilter::Bloom(b)) => a.union_cardinality(b),
            _ => panic!("filters of one estimator share a kind"),
        }
    }
}
