//! Bit-strings and measurement datasets.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::NoiseModel;

/// Largest chain length a [`BitString`] can hold.
pub const MAX_SITES: usize = 64;

/// A length-`N` binary configuration, used both for measurement records and
/// for visible-layer states.
///
/// Site 0 is the leftmost character and the most significant bit of
/// [`index`](BitString::index), so `index = sum_i s_i 2^(N-1-i)`.
/// Bit 1 means the Rydberg state.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct BitString {
    bits: u64,
    len: u8,
}

impl BitString {
    pub fn from_index(index: u64, len: usize) -> Self {
        assert!(len >= 1 && len <= MAX_SITES, "bit-string length {len} out of range");
        let mask = if len == 64 { u64::MAX } else { (1u64 << len) - 1 };
        debug_assert_eq!(index & !mask, 0, "index {index} does not fit {len} bits");
        BitString {
            bits: index & mask,
            len: len as u8,
        }
    }

    pub fn zeros(len: usize) -> Self {
        Self::from_index(0, len)
    }

    pub fn from_bits(bits: &[u8]) -> Self {
        let index = bits
            .iter()
            .fold(0u64, |acc, &b| (acc << 1) | u64::from(b != 0));
        Self::from_index(index, bits.len())
    }

    #[inline]
    pub fn index(&self) -> u64 {
        self.bits
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.len as usize
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn get(&self, site: usize) -> bool {
        debug_assert!(site < self.len());
        (self.bits >> (self.len() - 1 - site)) & 1 == 1
    }

    #[inline]
    pub fn flipped(&self, site: usize) -> Self {
        BitString {
            bits: self.bits ^ site_mask(self.len(), site),
            len: self.len,
        }
    }

    pub fn with(&self, site: usize, value: bool) -> Self {
        if self.get(site) == value {
            *self
        } else {
            self.flipped(site)
        }
    }

    pub fn count_ones(&self) -> u32 {
        self.bits.count_ones()
    }

    pub fn to_bits(&self) -> Vec<u8> {
        (0..self.len()).map(|i| u8::from(self.get(i))).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len()).map(move |i| self.get(i))
    }
}

/// Mask of `site` inside an index of `n` sites.
#[inline]
pub fn site_mask(n: usize, site: usize) -> u64 {
    1u64 << (n - 1 - site)
}

impl fmt::Display for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.iter() {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromStr for BitString {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.is_empty() || s.len() > MAX_SITES {
            return Err(Error::argument(format!(
                "bit-string length {} not in 1..={MAX_SITES}",
                s.len()
            )));
        }
        let mut index = 0u64;
        for c in s.chars() {
            index = (index << 1)
                | match c {
                    '0' => 0,
                    '1' => 1,
                    other => {
                        return Err(Error::argument(format!(
                            "invalid character {other:?} in bit-string"
                        )))
                    }
                };
        }
        Ok(BitString::from_index(index, s.len()))
    }
}

/// Where a dataset came from. Stored in the dataset header.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub n_sites: usize,
    pub n_samples: usize,
    pub seed: u64,
    pub source: String,
    #[serde(default)]
    pub noise: Option<NoiseModel>,
    #[serde(default)]
    pub noise_seed: Option<u64>,
    #[serde(default)]
    pub sweep_time_us: Option<f64>,
    #[serde(default)]
    pub delta_mhz: Option<f64>,
    #[serde(default)]
    pub config_hash: Option<String>,
}

/// An ordered multiset of measurement records.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub samples: Vec<BitString>,
    pub meta: DatasetMeta,
}

impl Dataset {
    pub fn new(n_sites: usize, samples: Vec<BitString>, mut meta: DatasetMeta) -> Result<Self> {
        if let Some(bad) = samples.iter().find(|s| s.len() != n_sites) {
            return Err(Error::argument(format!(
                "sample {bad} has length {} but the dataset has {n_sites} sites",
                bad.len()
            )));
        }
        meta.n_sites = n_sites;
        meta.n_samples = samples.len();
        Ok(Dataset { samples, meta })
    }

    pub fn n_sites(&self) -> usize {
        self.meta.n_sites
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Occurrence count per distinct configuration index.
    pub fn counts(&self) -> BTreeMap<u64, u64> {
        let mut counts = BTreeMap::new();
        for s in &self.samples {
            *counts.entry(s.index()).or_insert(0) += 1;
        }
        counts
    }

    /// Distinct configurations with their empirical frequencies.
    pub fn weighted(&self) -> Vec<(u64, f64)> {
        let total = self.samples.len() as f64;
        self.counts()
            .into_iter()
            .map(|(k, c)| (k, c as f64 / total))
            .collect()
    }

    /// Dense empirical distribution over all `2^N` configurations.
    pub fn empirical_distribution(&self) -> Vec<f64> {
        let mut p = vec![0.0; 1usize << self.n_sites()];
        let w = 1.0 / self.samples.len() as f64;
        for s in &self.samples {
            p[s.index() as usize] += w;
        }
        p
    }

    pub fn subset(&self, indices: &[usize], source: &str) -> Dataset {
        let samples: Vec<_> = indices.iter().map(|&i| self.samples[i]).collect();
        let mut meta = self.meta.clone();
        meta.source = format!("{} [{}]", meta.source, source);
        meta.n_samples = samples.len();
        Dataset { samples, meta }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn site_zero_is_most_significant() {
        let s: BitString = "10000000".parse().unwrap();
        assert_eq!(s.index(), 128);
        assert!(s.get(0));
        assert!(!s.get(7));
        assert_eq!(s.flipped(7).index(), 129);
        assert_eq!(s.to_string(), "10000000");
    }

    #[test]
    fn parse_rejects_garbage() {
        assert!("10x1".parse::<BitString>().is_err());
        assert!("".parse::<BitString>().is_err());
    }

    #[test]
    fn dataset_checks_lengths() {
        let s = vec!["01".parse().unwrap(), "011".parse().unwrap()];
        assert!(Dataset::new(2, s, DatasetMeta::default()).is_err());
    }

    #[test]
    fn counts_and_weights() {
        let s: Vec<BitString> = ["00", "00", "01"].iter().map(|x| x.parse().unwrap()).collect();
        let d = Dataset::new(2, s, DatasetMeta::default()).unwrap();
        let c = d.counts();
        assert_eq!(c[&0], 2);
        assert_eq!(c[&1], 1);
        let p = d.empirical_distribution();
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-15);
    }
}
