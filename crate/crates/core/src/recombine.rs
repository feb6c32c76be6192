//! Recombination of fragment tensors into a full-circuit distribution.
//!
//! Each fragment contributes a tensor `F[m_1..m_A; s]`: one Pauli index
//! `m in {I, X, Y, Z}` per severed axis (inputs first, then outputs) and one
//! block per classical output bitstring `s`. Contracting paired cut axes
//! against each other, scaling by `2^-K` for `K` cuts, and routing each
//! `s` onto its original wires reproduces the uncut circuit's distribution
//! as a quasi-probability; shot noise can push individual entries negative,
//! so the final step clips and renormalizes.

use std::collections::BTreeMap;

use crate::circuit::{FragmentGraph, StitchSide};
use crate::dist::ProbDist;
use crate::{Error, Result};

/// Pauli indices per tensor axis.
pub const PAULI_DIM: usize = 4;

/// A fragment's Pauli-basis transfer tensor.
///
/// `blocks[s]` is a dense vector over `4^A` entries, indexed with axis 0 as
/// the most significant base-4 digit. Bitstrings `s` never observed carry no
/// block, which is equivalent to a block of zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct FragmentTensor {
    axes: Vec<(usize, StitchSide)>,
    c_out: usize,
    blocks: BTreeMap<u64, Vec<f64>>,
}

impl FragmentTensor {
    pub fn new(
        axes: Vec<(usize, StitchSide)>,
        c_out: usize,
        blocks: BTreeMap<u64, Vec<f64>>,
    ) -> Result<Self> {
        let len = PAULI_DIM.pow(axes.len() as u32);
        for (s, block) in &blocks {
            if block.len() != len {
                return Err(Error::InvalidArgument(format!(
                    "tensor block for s={s} has {} entries, expected {len}",
                    block.len()
                )));
            }
            if *s >> c_out != 0 {
                return Err(Error::InvalidArgument(format!(
                    "tensor block key {s} exceeds {c_out} classical bits"
                )));
            }
        }
        Ok(FragmentTensor { axes, c_out, blocks })
    }

    pub fn axes(&self) -> &[(usize, StitchSide)] {
        &self.axes
    }

    pub fn c_out(&self) -> usize {
        self.c_out
    }

    pub fn blocks(&self) -> &BTreeMap<u64, Vec<f64>> {
        &self.blocks
    }

    /// Entry at the given per-axis Pauli digits for block `s` (zero when the
    /// block is absent).
    pub fn get(&self, paulis: &[usize], s: u64) -> f64 {
        debug_assert_eq!(paulis.len(), self.axes.len());
        let idx = paulis.iter().fold(0usize, |acc, &m| acc * PAULI_DIM + m);
        self.blocks.get(&s).map_or(0.0, |b| b[idx])
    }
}

/// Raw recombined quasi-distribution: sums to one in expectation but entries
/// can be negative under shot noise.
#[derive(Debug, Clone, PartialEq)]
pub struct RawReconstruction {
    num_bits: usize,
    values: BTreeMap<u64, f64>,
}

impl RawReconstruction {
    pub fn num_bits(&self) -> usize {
        self.num_bits
    }

    pub fn get(&self, bits: u64) -> f64 {
        self.values.get(&bits).copied().unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.values.values().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, f64)> + '_ {
        self.values.iter().map(|(&b, &v)| (b, v))
    }
}

/// How much quasi-probability the physicality projection removed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClipReport {
    /// Total absolute negative mass discarded.
    pub clipped_mass: f64,
    /// Sum of the positive entries before renormalization.
    pub positive_mass: f64,
}

/// Dense base-4 tensor over an ordered list of axes.
struct Dense {
    axes: Vec<(usize, StitchSide)>,
    data: Vec<f64>,
}

/// Inserts digit `m` at axis position `pos` of a reduced index over
/// `remaining` trailing axes.
fn insert_digit(reduced: usize, pos: usize, total_axes: usize, m: usize) -> usize {
    let low = PAULI_DIM.pow((total_axes - 1 - pos) as u32);
    let hi = reduced / low;
    let lo = reduced % low;
    (hi * PAULI_DIM + m) * low + lo
}

fn pair_contract(a: &Dense, ia: usize, b: &Dense, ib: usize) -> Dense {
    let na = a.axes.len();
    let nb = b.axes.len();
    let ra = a.data.len() / PAULI_DIM;
    let rb = b.data.len() / PAULI_DIM;
    let mut axes = Vec::with_capacity(na + nb - 2);
    axes.extend(a.axes.iter().enumerate().filter(|&(i, _)| i != ia).map(|(_, &x)| x));
    axes.extend(b.axes.iter().enumerate().filter(|&(i, _)| i != ib).map(|(_, &x)| x));
    let mut data = vec![0.0; ra * rb];
    for ar in 0..ra {
        for br in 0..rb {
            let mut acc = 0.0;
            for m in 0..PAULI_DIM {
                acc += a.data[insert_digit(ar, ia, na, m)] * b.data[insert_digit(br, ib, nb, m)];
            }
            data[ar * rb + br] = acc;
        }
    }
    Dense { axes, data }
}

fn trace_pair(t: &Dense, i: usize, j: usize) -> Dense {
    let (i, j) = if i < j { (i, j) } else { (j, i) };
    let n = t.axes.len();
    let axes = t
        .axes
        .iter()
        .enumerate()
        .filter(|&(k, _)| k != i && k != j)
        .map(|(_, &x)| x)
        .collect();
    let reduced = t.data.len() / (PAULI_DIM * PAULI_DIM);
    let mut data = vec![0.0; reduced];
    for (red, slot) in data.iter_mut().enumerate() {
        let mut acc = 0.0;
        for m in 0..PAULI_DIM {
            // Insert at the later position first so the earlier insertion
            // shifts it into place.
            let idx = insert_digit(insert_digit(red, j - 1, n - 1, m), i, n, m);
            acc += t.data[idx];
        }
        *slot = acc;
    }
    Dense { axes, data }
}

/// Contracts every stitched axis pair and routes each fragment's classical
/// bits onto its original wires, summing over all combinations of observed
/// blocks. The result carries the `2^-K` cut prefactor.
pub fn contract(graph: &FragmentGraph, tensors: &[FragmentTensor]) -> Result<RawReconstruction> {
    let fragments = graph.fragments();
    if tensors.len() != fragments.len() {
        return Err(Error::TopologyMismatch(format!(
            "{} tensors for {} fragments",
            tensors.len(),
            fragments.len()
        )));
    }
    for (f, tensor) in tensors.iter().enumerate() {
        if tensor.axes() != graph.fragment_axes(f) {
            return Err(Error::TopologyMismatch(format!(
                "tensor {f} axes do not match the cut graph"
            )));
        }
        if tensor.c_out() != fragments[f].classical_output_count() {
            return Err(Error::TopologyMismatch(format!(
                "tensor {f} has {} classical bits, fragment has {}",
                tensor.c_out(),
                fragments[f].classical_output_count()
            )));
        }
    }
    for tensor in tensors {
        if tensor.blocks().is_empty() {
            return Err(Error::IncompleteData(
                "a fragment tensor has no observed blocks".into(),
            ));
        }
    }

    let prefactor = 0.5f64.powi(graph.num_cuts() as i32);
    let keys: Vec<Vec<u64>> = tensors
        .iter()
        .map(|t| t.blocks().keys().copied().collect())
        .collect();

    let mut values: BTreeMap<u64, f64> = BTreeMap::new();
    // Odometer over one observed block per fragment.
    let mut combo = vec![0usize; tensors.len()];
    loop {
        let weight = contract_combo(graph, tensors, &keys, &combo) * prefactor;
        if weight != 0.0 {
            let mut bits = 0u64;
            for (f, wires) in graph.output_order().iter().enumerate() {
                let s = keys[f][combo[f]];
                for (j, &wire) in wires.iter().enumerate() {
                    bits |= ((s >> j) & 1) << wire;
                }
            }
            *values.entry(bits).or_insert(0.0) += weight;
        }
        // Advance the odometer, last fragment fastest.
        let mut pos = combo.len();
        loop {
            if pos == 0 {
                return Ok(RawReconstruction {
                    num_bits: graph.num_qubits(),
                    values,
                });
            }
            pos -= 1;
            combo[pos] += 1;
            if combo[pos] < keys[pos].len() {
                break;
            }
            combo[pos] = 0;
        }
    }
}

fn contract_combo(
    graph: &FragmentGraph,
    tensors: &[FragmentTensor],
    keys: &[Vec<u64>],
    combo: &[usize],
) -> f64 {
    // Cluster state: each fragment starts as its own dense tensor; stitches
    // either merge two clusters or trace a pair of axes within one.
    let mut cluster_of: Vec<usize> = (0..tensors.len()).collect();
    let zero_len = |t: &FragmentTensor| PAULI_DIM.pow(t.axes().len() as u32);
    let mut clusters: Vec<Option<Dense>> = tensors
        .iter()
        .enumerate()
        .map(|(f, t)| {
            let s = keys[f][combo[f]];
            let data = t
                .blocks()
                .get(&s)
                .cloned()
                .unwrap_or_else(|| vec![0.0; zero_len(t)]);
            Some(Dense {
                axes: t.axes().to_vec(),
                data,
            })
        })
        .collect();

    for (k, stitch) in graph.stitches().iter().enumerate() {
        let ca = cluster_of[stitch.from.0];
        let cb = cluster_of[stitch.to.0];
        let find = |d: &Dense, side: StitchSide| {
            d.axes
                .iter()
                .position(|&(sk, ss)| sk == k && ss == side)
                .expect("stitched axis present")
        };
        if ca != cb {
            let a = clusters[ca].take().expect("live cluster");
            let b = clusters[cb].take().expect("live cluster");
            let ia = find(&a, StitchSide::Output);
            let ib = find(&b, StitchSide::Input);
            let merged = pair_contract(&a, ia, &b, ib);
            clusters[ca] = Some(merged);
            for c in cluster_of.iter_mut() {
                if *c == cb {
                    *c = ca;
                }
            }
        } else {
            let t = clusters[ca].take().expect("live cluster");
            let i = find(&t, StitchSide::Output);
            let j = find(&t, StitchSide::Input);
            clusters[ca] = Some(trace_pair(&t, i, j));
        }
    }

    clusters
        .iter()
        .flatten()
        .map(|d| {
            debug_assert!(d.axes.is_empty());
            d.data[0]
        })
        .product()
}

/// Projects a raw quasi-distribution onto genuine probabilities: negative
/// entries are dropped and the rest renormalized. Fails when nothing
/// positive remains.
pub fn clip_and_normalize(raw: &RawReconstruction) -> Result<(ProbDist, ClipReport)> {
    let mut clipped = 0.0;
    let mut positive = 0.0;
    for (_, v) in raw.iter() {
        if v < 0.0 {
            clipped -= v;
        } else {
            positive += v;
        }
    }
    if positive <= 0.0 {
        return Err(Error::DegenerateReconstruction);
    }
    let mut dist = ProbDist::new(raw.num_bits());
    for (bits, v) in raw.iter() {
        if v > 0.0 {
            dist.set(bits, v / positive);
        }
    }
    Ok((
        dist,
        ClipReport {
            clipped_mass: clipped,
            positive_mass: positive,
        },
    ))
}
