//! Exact simulation and shot sampling of fragment tomography variants.
//!
//! A *variant* of a fragment fixes one preparation label per quantum input
//! and one measurement basis per quantum output. Classical inputs start in
//! `|0>`; classical outputs are read in the computational basis. Simulating
//! a variant yields a joint distribution over the measurement eigenvalue
//! string `r` (one sign per quantum output, `+1` encoded as bit 0) and the
//! classical bitstring `s`.
//!
//! Preparations use the four states `|0>`, `|1>`, `|+>`, `|+i>`; together
//! with the completion rule in [`crate::direct`] they span each input
//! qubit's operator space. Measurement bases are X, Y, Z, realized by
//! rotating the output wire into the computational basis (X via H, Y via
//! H S^dagger) before reading it out.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::distributions::WeightedIndex;
use rand::prelude::Distribution;
use rand::Rng;
use rand_distr::weighted_alias::WeightedAliasIndex;
use serde::{Deserialize, Serialize};

use crate::circuit::{Circuit, Fragment, Gate};
use crate::dist::{format_bits, parse_bits, ProbDist};
use crate::{Error, Result};

/// Largest statevector simulated by default; `2^26` complex amplitudes is
/// one gigabyte. Overridable per call and via harness configuration.
pub const DEFAULT_STATEVECTOR_LIMIT: usize = 26;

/// Tomography preparation states for severed input wires.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PrepLabel {
    #[serde(rename = "Z+")]
    ZPlus,
    #[serde(rename = "Z-")]
    ZMinus,
    #[serde(rename = "X+")]
    XPlus,
    #[serde(rename = "Y+")]
    YPlus,
}

impl PrepLabel {
    pub const ALL: [PrepLabel; 4] = [
        PrepLabel::ZPlus,
        PrepLabel::ZMinus,
        PrepLabel::XPlus,
        PrepLabel::YPlus,
    ];

    /// Single-qubit state vector of the prepared eigenstate.
    pub fn state(self) -> [Complex64; 2] {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        match self {
            PrepLabel::ZPlus => [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)],
            PrepLabel::ZMinus => [Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)],
            PrepLabel::XPlus => [Complex64::new(h, 0.0), Complex64::new(h, 0.0)],
            PrepLabel::YPlus => [Complex64::new(h, 0.0), Complex64::new(0.0, h)],
        }
    }
}

/// Tomography measurement bases for severed output wires.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MeasBasis {
    X,
    Y,
    Z,
}

impl MeasBasis {
    pub const ALL: [MeasBasis; 3] = [MeasBasis::X, MeasBasis::Y, MeasBasis::Z];
}

/// One tomography setting: a preparation per quantum input (slot order) and
/// a basis per quantum output (slot order).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VariantKey {
    pub preps: Vec<PrepLabel>,
    pub bases: Vec<MeasBasis>,
}

impl VariantKey {
    /// All `4^inputs * 3^outputs` variants of a fragment in canonical order:
    /// preparations vary as base-4 digits (slot 0 most significant, label
    /// order `Z+ Z- X+ Y+`), then bases as base-3 digits (order `X Y Z`).
    pub fn enumerate(fragment: &Fragment) -> Vec<VariantKey> {
        let qi = fragment.quantum_inputs().len();
        let qo = fragment.quantum_outputs().len();
        let total = 4usize.pow(qi as u32) * 3usize.pow(qo as u32);
        let mut keys = Vec::with_capacity(total);
        for pi in 0..4usize.pow(qi as u32) {
            let mut preps = vec![PrepLabel::ZPlus; qi];
            let mut rest = pi;
            for j in (0..qi).rev() {
                preps[j] = PrepLabel::ALL[rest % 4];
                rest /= 4;
            }
            for bi in 0..3usize.pow(qo as u32) {
                let mut bases = vec![MeasBasis::X; qo];
                let mut rest = bi;
                for j in (0..qo).rev() {
                    bases[j] = MeasBasis::ALL[rest % 3];
                    rest /= 3;
                }
                keys.push(VariantKey {
                    preps: preps.clone(),
                    bases: bases.clone(),
                });
            }
        }
        keys
    }

    /// Position of this key in [`VariantKey::enumerate`] order.
    pub fn index(&self) -> usize {
        let mut pi = 0;
        for &p in &self.preps {
            pi = pi * 4 + PrepLabel::ALL.iter().position(|&q| q == p).unwrap();
        }
        let mut bi = 0;
        for &b in &self.bases {
            bi = bi * 3 + MeasBasis::ALL.iter().position(|&c| c == b).unwrap();
        }
        pi * 3usize.pow(self.bases.len() as u32) + bi
    }
}

/// Joint Born distribution over `(r, s)` for one variant, stored densely.
/// Index packing: `(r << c_out) | s`, with bit `j` of `r` the outcome of
/// quantum output slot `j` (0 for +1) and bit `j` of `s` the bit of the
/// `j`-th classical output wire.
#[derive(Debug, Clone, PartialEq)]
pub struct VariantDistribution {
    q_out: usize,
    c_out: usize,
    probs: Vec<f64>,
}

impl VariantDistribution {
    /// Wraps a dense table, flooring negatives above `-1e-12` (roundoff from
    /// derived arithmetic) to zero and rejecting anything more negative.
    pub fn from_probs(q_out: usize, c_out: usize, mut probs: Vec<f64>) -> Result<Self> {
        if probs.len() != 1 << (q_out + c_out) {
            return Err(Error::InvalidArgument(format!(
                "variant table needs 2^{} entries, got {}",
                q_out + c_out,
                probs.len()
            )));
        }
        for p in &mut probs {
            if *p < 0.0 {
                if *p < -1e-12 {
                    return Err(Error::InvalidDistribution(format!(
                        "variant probability {p} below tolerance"
                    )));
                }
                *p = 0.0;
            }
        }
        Ok(VariantDistribution { q_out, c_out, probs })
    }

    pub fn q_out(&self) -> usize {
        self.q_out
    }

    pub fn c_out(&self) -> usize {
        self.c_out
    }

    pub fn get(&self, r: u32, s: u64) -> f64 {
        self.probs[((r as u64) << self.c_out | s) as usize]
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    /// Nonzero entries as `((r, s), probability)`.
    pub fn iter(&self) -> impl Iterator<Item = ((u32, u64), f64)> + '_ {
        self.probs.iter().enumerate().filter_map(move |(i, &p)| {
            (p > 0.0).then(|| {
                let r = (i >> self.c_out) as u32;
                let s = i as u64 & ((1u64 << self.c_out) - 1);
                ((r, s), p)
            })
        })
    }
}

/// Shot counts drawn from one variant's distribution. Outcomes never drawn
/// are absent.
#[derive(Debug, Clone, PartialEq)]
pub struct VariantCounts {
    pub key: VariantKey,
    n: u64,
    counts: BTreeMap<(u32, u64), u64>,
}

impl VariantCounts {
    pub fn new(key: VariantKey, n: u64, counts: BTreeMap<(u32, u64), u64>) -> Result<Self> {
        let total: u64 = counts.values().sum();
        if total != n {
            return Err(Error::InvalidArgument(format!(
                "counts sum to {total}, expected n = {n}"
            )));
        }
        Ok(VariantCounts { key, n, counts })
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn counts(&self) -> &BTreeMap<(u32, u64), u64> {
        &self.counts
    }

    /// Observed relative frequencies; an empty iterator when `n = 0`.
    pub fn frequencies(&self) -> impl Iterator<Item = ((u32, u64), f64)> + '_ {
        let n = self.n as f64;
        self.counts.iter().map(move |(&k, &c)| (k, c as f64 / n))
    }

    /// Serializes as `{"key": {...}, "n": .., "counts": {"r:s": count}}`,
    /// where `r` is a string of `+`/`-` signs (one per quantum output) and
    /// `s` a classical bitstring.
    pub fn to_json(&self, c_out: usize) -> String {
        #[derive(Serialize)]
        struct Doc<'a> {
            key: &'a VariantKey,
            n: u64,
            counts: BTreeMap<String, u64>,
        }
        let q_out = self.key.bases.len();
        let counts = self
            .counts
            .iter()
            .map(|(&(r, s), &c)| {
                let signs: String = (0..q_out)
                    .map(|j| if r >> j & 1 == 1 { '-' } else { '+' })
                    .collect();
                (format!("{signs}:{}", format_bits(s, c_out)), c)
            })
            .collect();
        serde_json::to_string_pretty(&Doc {
            key: &self.key,
            n: self.n,
            counts,
        })
        .expect("counts serialize")
    }

    pub fn from_json(json: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Doc {
            key: VariantKey,
            n: u64,
            counts: BTreeMap<String, u64>,
        }
        let doc: Doc = serde_json::from_str(json)?;
        let q_out = doc.key.bases.len();
        let mut counts = BTreeMap::new();
        for (outcome, c) in doc.counts {
            let (signs, bits) = outcome.split_once(':').ok_or_else(|| {
                Error::InvalidArgument(format!("outcome key {outcome:?} lacks ':'"))
            })?;
            if signs.len() != q_out {
                return Err(Error::InvalidArgument(format!(
                    "outcome key {outcome:?} has {} signs, expected {q_out}",
                    signs.len()
                )));
            }
            let mut r = 0u32;
            for (j, ch) in signs.chars().enumerate() {
                match ch {
                    '+' => {}
                    '-' => r |= 1 << j,
                    _ => {
                        return Err(Error::InvalidArgument(format!(
                            "outcome key {outcome:?} has sign {ch:?}"
                        )))
                    }
                }
            }
            let s = parse_bits(bits, bits.len())?;
            counts.insert((r, s), c);
        }
        VariantCounts::new(doc.key, doc.n, counts)
    }
}

struct Statevector {
    num_qubits: usize,
    amps: Vec<Complex64>,
}

impl Statevector {
    /// Product state with the given single-qubit state on each wire.
    fn from_product(states: &[[Complex64; 2]]) -> Self {
        let n = states.len();
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << n];
        for (idx, amp) in amps.iter_mut().enumerate() {
            let mut a = Complex64::new(1.0, 0.0);
            for (q, st) in states.iter().enumerate() {
                a *= st[idx >> q & 1];
            }
            *amp = a;
        }
        Statevector { num_qubits: n, amps }
    }

    /// Applies a `2^k x 2^k` matrix to the target wires. `targets[0]` is the
    /// most significant bit of the matrix's basis index.
    fn apply_matrix(&mut self, matrix: &DMatrix<Complex64>, targets: &[usize]) {
        let k = targets.len();
        let dim = 1usize << k;
        debug_assert_eq!(matrix.nrows(), dim);
        // Bit of target j inside a local basis index m.
        let offsets: Vec<usize> = (0..dim)
            .map(|m| {
                (0..k)
                    .map(|j| ((m >> (k - 1 - j)) & 1) << targets[j])
                    .sum()
            })
            .collect();
        let mut sorted = targets.to_vec();
        sorted.sort_unstable();
        let mut scratch = vec![Complex64::new(0.0, 0.0); dim];
        for block in 0..1usize << (self.num_qubits - k) {
            // Spread the block index across the non-target bit positions.
            let mut base = block;
            for &t in &sorted {
                base = (base >> t << (t + 1)) | (base & ((1usize << t) - 1));
            }
            for (m, slot) in scratch.iter_mut().enumerate() {
                *slot = self.amps[base | offsets[m]];
            }
            for m_out in 0..dim {
                let mut acc = Complex64::new(0.0, 0.0);
                for (m_in, amp) in scratch.iter().enumerate() {
                    acc += matrix[(m_out, m_in)] * amp;
                }
                self.amps[base | offsets[m_out]] = acc;
            }
        }
    }

    fn apply_gate(&mut self, gate: &Gate) {
        self.apply_matrix(gate.matrix(), gate.targets());
    }
}

fn check_limit(num_qubits: usize, limit: usize) -> Result<()> {
    if num_qubits > limit {
        return Err(Error::StatevectorLimit {
            qubits: num_qubits,
            limit,
        });
    }
    Ok(())
}

/// Maps X-basis eigenstates to the computational basis.
fn x_rotation() -> DMatrix<Complex64> {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    DMatrix::from_row_slice(
        2,
        2,
        &[
            Complex64::new(h, 0.0),
            Complex64::new(h, 0.0),
            Complex64::new(h, 0.0),
            Complex64::new(-h, 0.0),
        ],
    )
}

/// Maps Y-basis eigenstates to the computational basis (H after S^dagger).
fn y_rotation() -> DMatrix<Complex64> {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    DMatrix::from_row_slice(
        2,
        2,
        &[
            Complex64::new(h, 0.0),
            Complex64::new(0.0, -h),
            Complex64::new(h, 0.0),
            Complex64::new(0.0, h),
        ],
    )
}

/// Exact Born distribution of one tomography variant.
pub fn exact_variant_distribution(
    fragment: &Fragment,
    key: &VariantKey,
) -> Result<VariantDistribution> {
    exact_variant_distribution_with_limit(fragment, key, DEFAULT_STATEVECTOR_LIMIT)
}

pub fn exact_variant_distribution_with_limit(
    fragment: &Fragment,
    key: &VariantKey,
    limit: usize,
) -> Result<VariantDistribution> {
    let nq = fragment.num_qubits();
    check_limit(nq, limit)?;
    if key.preps.len() != fragment.quantum_inputs().len()
        || key.bases.len() != fragment.quantum_outputs().len()
    {
        return Err(Error::InvalidArgument(format!(
            "variant key shape ({} preps, {} bases) does not match fragment ({}, {})",
            key.preps.len(),
            key.bases.len(),
            fragment.quantum_inputs().len(),
            fragment.quantum_outputs().len()
        )));
    }

    let zero = PrepLabel::ZPlus.state();
    let mut states = vec![zero; nq];
    for (j, &wire) in fragment.quantum_inputs().iter().enumerate() {
        states[wire] = key.preps[j].state();
    }
    let mut sv = Statevector::from_product(&states);
    for gate in fragment.subcircuit().gates() {
        sv.apply_gate(gate);
    }
    for (j, &wire) in fragment.quantum_outputs().iter().enumerate() {
        match key.bases[j] {
            MeasBasis::X => sv.apply_matrix(&x_rotation(), &[wire]),
            MeasBasis::Y => sv.apply_matrix(&y_rotation(), &[wire]),
            MeasBasis::Z => {}
        }
    }

    let q_out = fragment.quantum_outputs().len();
    let c_out = fragment.classical_output_count();
    let mut probs = vec![0.0f64; 1 << nq];
    for (idx, amp) in sv.amps.iter().enumerate() {
        let p = amp.norm_sqr();
        if p == 0.0 {
            continue;
        }
        let mut r = 0u64;
        for (j, &wire) in fragment.quantum_outputs().iter().enumerate() {
            r |= ((idx as u64 >> wire) & 1) << j;
        }
        let mut s = 0u64;
        for (j, &wire) in fragment.classical_output_wires().iter().enumerate() {
            s |= ((idx as u64 >> wire) & 1) << j;
        }
        probs[(r << c_out | s) as usize] += p;
    }
    VariantDistribution::from_probs(q_out, c_out, probs)
}

/// Draws multinomial counts for `n` shots of one variant. Sampling uses an
/// alias table when `n` exceeds the support size and inverse-CDF lookup
/// otherwise; the split is an implementation detail behind this interface.
pub fn sample_variant(
    dist: &VariantDistribution,
    key: &VariantKey,
    n: u64,
    rng: &mut impl Rng,
) -> Result<VariantCounts> {
    let counts = sample_counts(dist.iter(), n, rng)?;
    Ok(VariantCounts {
        key: key.clone(),
        n,
        counts,
    })
}

fn sample_counts<K: Ord + Copy>(
    support: impl Iterator<Item = (K, f64)>,
    n: u64,
    rng: &mut impl Rng,
) -> Result<BTreeMap<K, u64>> {
    let (keys, weights): (Vec<K>, Vec<f64>) = support.unzip();
    let mut counts: BTreeMap<K, u64> = BTreeMap::new();
    if n == 0 {
        return Ok(counts);
    }
    if keys.is_empty() {
        return Err(Error::InvalidDistribution(
            "cannot sample from an empty distribution".into(),
        ));
    }
    let mut tally = vec![0u64; keys.len()];
    if (n as usize) > keys.len() {
        let alias = WeightedAliasIndex::new(weights)
            .map_err(|e| Error::InvalidDistribution(format!("alias table: {e}")))?;
        for _ in 0..n {
            tally[alias.sample(rng)] += 1;
        }
    } else {
        let cdf = WeightedIndex::new(&weights)
            .map_err(|e| Error::InvalidDistribution(format!("cumulative table: {e}")))?;
        for _ in 0..n {
            tally[cdf.sample(rng)] += 1;
        }
    }
    for (key, count) in keys.into_iter().zip(tally) {
        if count > 0 {
            counts.insert(key, count);
        }
    }
    Ok(counts)
}

/// Exact output distribution of an uncut circuit.
pub fn exact_full_distribution(circuit: &Circuit) -> Result<ProbDist> {
    exact_full_distribution_with_limit(circuit, DEFAULT_STATEVECTOR_LIMIT)
}

pub fn exact_full_distribution_with_limit(circuit: &Circuit, limit: usize) -> Result<ProbDist> {
    let nq = circuit.num_qubits();
    check_limit(nq, limit)?;
    let mut sv = Statevector::from_product(&vec![PrepLabel::ZPlus.state(); nq]);
    for gate in circuit.gates() {
        sv.apply_gate(gate);
    }
    let mut dist = ProbDist::new(nq);
    for (idx, amp) in sv.amps.iter().enumerate() {
        let p = amp.norm_sqr();
        if p > 0.0 {
            dist.add(idx as u64, p);
        }
    }
    Ok(dist)
}

/// Multinomial draw of `shots` outcomes from an exact distribution,
/// returned as raw counts summing to `shots`.
pub fn sample_outcome_counts(
    exact: &ProbDist,
    shots: u64,
    rng: &mut impl Rng,
) -> Result<BTreeMap<u64, u64>> {
    if shots == 0 {
        return Err(Error::InvalidArgument(
            "zero shots give a degenerate empirical distribution".into(),
        ));
    }
    sample_counts(exact.iter(), shots, rng)
}

/// Empirical frequencies of `shots` multinomial draws from `exact`. The
/// underlying counts sum to `shots` by construction.
pub fn sample_from_exact(exact: &ProbDist, shots: u64, rng: &mut impl Rng) -> Result<ProbDist> {
    let counts = sample_outcome_counts(exact, shots, rng)?;
    let mut dist = ProbDist::new(exact.num_bits());
    for (bits, count) in counts {
        dist.set(bits, count as f64 / shots as f64);
    }
    Ok(dist)
}

/// Simulates the uncut circuit and samples it: the "run the whole circuit"
/// estimator the cutting pipelines are compared against.
pub fn sample_full(circuit: &Circuit, shots: u64, rng: &mut impl Rng) -> Result<ProbDist> {
    sample_full_with_limit(circuit, shots, rng, DEFAULT_STATEVECTOR_LIMIT)
}

pub fn sample_full_with_limit(
    circuit: &Circuit,
    shots: u64,
    rng: &mut impl Rng,
    limit: usize,
) -> Result<ProbDist> {
    let exact = exact_full_distribution_with_limit(circuit, limit)?;
    sample_from_exact(&exact, shots, rng)
}
