//! Sparse probability distributions over measurement bitstrings.

use std::collections::BTreeMap;

use crate::{Error, Result};

/// Renders packed bits as a string with qubit 0 leftmost: `format_bits(0b110, 3)`
/// is `"011"`.
pub fn format_bits(bits: u64, len: usize) -> String {
    (0..len)
        .map(|q| if bits >> q & 1 == 1 { '1' } else { '0' })
        .collect()
}

/// Inverse of [`format_bits`]. Rejects strings of the wrong length or with
/// characters other than `0`/`1`.
pub fn parse_bits(s: &str, len: usize) -> Result<u64> {
    if s.len() != len {
        return Err(Error::InvalidArgument(format!(
            "bitstring {s:?} has length {}, expected {len}",
            s.len()
        )));
    }
    let mut bits = 0u64;
    for (q, c) in s.chars().enumerate() {
        match c {
            '0' => {}
            '1' => bits |= 1 << q,
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "bitstring {s:?} contains {c:?}"
                )))
            }
        }
    }
    Ok(bits)
}

/// A distribution (or sub-normalized/raw weight map) over bitstrings of a
/// fixed width. Entries are stored sparsely; absent bitstrings have weight 0.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbDist {
    num_bits: usize,
    probs: BTreeMap<u64, f64>,
}

impl ProbDist {
    pub fn new(num_bits: usize) -> Self {
        ProbDist {
            num_bits,
            probs: BTreeMap::new(),
        }
    }

    pub fn from_map(num_bits: usize, probs: BTreeMap<u64, f64>) -> Self {
        debug_assert!(probs.keys().all(|&b| num_bits >= 64 || b >> num_bits == 0));
        ProbDist { num_bits, probs }
    }

    pub fn num_bits(&self) -> usize {
        self.num_bits
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn get(&self, bits: u64) -> f64 {
        self.probs.get(&bits).copied().unwrap_or(0.0)
    }

    /// Adds `weight` to the entry for `bits`.
    pub fn add(&mut self, bits: u64, weight: f64) {
        *self.probs.entry(bits).or_insert(0.0) += weight;
    }

    pub fn set(&mut self, bits: u64, weight: f64) {
        self.probs.insert(bits, weight);
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, f64)> + '_ {
        self.probs.iter().map(|(&b, &p)| (b, p))
    }

    pub fn total(&self) -> f64 {
        self.probs.values().sum()
    }

    pub fn min_value(&self) -> f64 {
        self.probs.values().copied().fold(f64::INFINITY, f64::min)
    }

    /// Total variation distance, `(1/2) * sum_b |p_b - q_b|` over the union
    /// of supports.
    pub fn total_variation(&self, other: &ProbDist) -> f64 {
        let mut tv = 0.0;
        for (&b, &p) in &self.probs {
            tv += (p - other.get(b)).abs();
        }
        for (&b, &q) in &other.probs {
            if !self.probs.contains_key(&b) {
                tv += q.abs();
            }
        }
        tv / 2.0
    }

    /// Serializes as a `{"bitstring": probability}` JSON object.
    pub fn to_json(&self) -> String {
        let map: BTreeMap<String, f64> = self
            .probs
            .iter()
            .map(|(&b, &p)| (format_bits(b, self.num_bits), p))
            .collect();
        serde_json::to_string_pretty(&map).expect("string-keyed map serializes")
    }

    pub fn from_json(num_bits: usize, json: &str) -> Result<Self> {
        let map: BTreeMap<String, f64> = serde_json::from_str(json)?;
        let mut probs = BTreeMap::new();
        for (s, p) in map {
            probs.insert(parse_bits(&s, num_bits)?, p);
        }
        Ok(ProbDist { num_bits, probs })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bit_formatting_puts_qubit_zero_first() {
        assert_eq!(format_bits(0b110, 3), "011");
        assert_eq!(format_bits(0, 3), "000");
        assert_eq!(parse_bits("011", 3).unwrap(), 0b110);
        assert!(parse_bits("01", 3).is_err());
        assert!(parse_bits("0x1", 3).is_err());
    }

    #[test]
    fn total_variation_over_union_of_supports() {
        let mut p = ProbDist::new(2);
        p.set(0b00, 0.5);
        p.set(0b11, 0.5);
        let mut q = ProbDist::new(2);
        q.set(0b00, 0.5);
        q.set(0b01, 0.5);
        assert!((p.total_variation(&q) - 0.5).abs() < 1e-15);
        assert_eq!(p.total_variation(&p), 0.0);
    }

    #[test]
    fn json_round_trip() {
        let mut p = ProbDist::new(3);
        p.set(0b110, 0.25);
        p.set(0, 0.75);
        let back = ProbDist::from_json(3, &p.to_json()).unwrap();
        assert_eq!(p, back);
    }
}
