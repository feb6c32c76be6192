//! Maximum-likelihood fragment tomography.
//!
//! Instead of averaging measured frequencies directly, this pipeline fits a
//! physical model of each fragment: a block-diagonal Choi operator with one
//! Hermitian block per classical outcome `s`, acting on the severed input
//! space tensored with the severed output space. Frequencies enter a linear
//! least-squares fit over the blocks' real Hermitian coordinates; the fitted
//! blocks are then projected to the nearest nonnegative, unit-trace
//! spectrum, pooling eigenvalues across blocks so probability can shift
//! between classical outcomes. Tensors extracted from the projected blocks
//! drop into [`crate::recombine`] exactly like directly estimated ones, but
//! inherit the model's physicality constraints.
//!
//! The predicted probability of seeing signs `r` and classical bits `s`
//! under variant `v` is `2^inputs * tr[block_s (rho_v^T (x) proj_{v,r})]`,
//! so a bare wire's Choi operator is `(1/2) sum_{jk} |jj><kk|`.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{Cholesky, DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::circuit::{Fragment, StitchSide};
use crate::dist::{format_bits, parse_bits};
use crate::fragsim::{
    exact_variant_distribution_with_limit, MeasBasis, PrepLabel, VariantCounts,
    VariantDistribution, VariantKey, DEFAULT_STATEVECTOR_LIMIT,
};
use crate::recombine::FragmentTensor;
use crate::{Error, Result};

/// Singular values below this are treated as zero when the normal equations
/// lose rank and the solver falls back to a pseudoinverse.
const RANK_CUTOFF: f64 = 1e-10;

fn c64(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn pauli(m: usize) -> DMatrix<Complex64> {
    let z = c64(0.0, 0.0);
    let o = c64(1.0, 0.0);
    match m {
        0 => DMatrix::from_row_slice(2, 2, &[o, z, z, o]),
        1 => DMatrix::from_row_slice(2, 2, &[z, o, o, z]),
        2 => DMatrix::from_row_slice(2, 2, &[z, c64(0.0, -1.0), c64(0.0, 1.0), z]),
        3 => DMatrix::from_row_slice(2, 2, &[o, z, z, c64(-1.0, 0.0)]),
        _ => unreachable!("Pauli index"),
    }
}

fn prep_density(p: PrepLabel) -> DMatrix<Complex64> {
    let st = p.state();
    DMatrix::from_fn(2, 2, |i, j| st[i] * st[j].conj())
}

/// Projector onto the `minus`-sign eigenstate of the basis.
fn basis_projector(b: MeasBasis, minus: bool) -> DMatrix<Complex64> {
    let p = match b {
        MeasBasis::X => pauli(1),
        MeasBasis::Y => pauli(2),
        MeasBasis::Z => pauli(3),
    };
    let sign = if minus { -1.0 } else { 1.0 };
    (pauli(0) + p * c64(sign, 0.0)) * c64(0.5, 0.0)
}

/// Kronecker product over single-qubit factors, slot 0 outermost.
fn kron_all(factors: &[DMatrix<Complex64>]) -> DMatrix<Complex64> {
    let mut acc = DMatrix::from_element(1, 1, c64(1.0, 0.0));
    for f in factors {
        acc = acc.kronecker(f);
    }
    acc
}

/// Real coordinates of a Hermitian operator against the basis `{E_ii}`,
/// `{E_ij + E_ji}`, `{i(E_ij - E_ji)}` for `i < j`: the traces `tr[H_k O]`.
fn hermitian_coords(op: &DMatrix<Complex64>) -> Vec<f64> {
    let d = op.nrows();
    let mut coords = Vec::with_capacity(d * d);
    for i in 0..d {
        coords.push(op[(i, i)].re);
    }
    for i in 0..d {
        for j in i + 1..d {
            coords.push(2.0 * op[(i, j)].re);
            coords.push(2.0 * op[(i, j)].im);
        }
    }
    coords
}

fn hermitian_from_coords(d: usize, x: &DVector<f64>) -> DMatrix<Complex64> {
    let mut m = DMatrix::from_element(d, d, c64(0.0, 0.0));
    for i in 0..d {
        m[(i, i)] = c64(x[i], 0.0);
    }
    let mut k = d;
    for i in 0..d {
        for j in i + 1..d {
            let entry = c64(x[k], x[k + 1]);
            m[(i, j)] = entry;
            m[(j, i)] = entry.conj();
            k += 2;
        }
    }
    m
}

/// Block-diagonal Choi operator of one fragment: a `2^(q_in+q_out)` square
/// Hermitian block per observed classical outcome. Row index packing is
/// `input_index * 2^q_out + output_index`, input slot 0 most significant.
#[derive(Debug, Clone, PartialEq)]
pub struct ChoiBlocks {
    q_in: usize,
    q_out: usize,
    c_out: usize,
    blocks: BTreeMap<u64, DMatrix<Complex64>>,
}

impl ChoiBlocks {
    pub fn new(
        q_in: usize,
        q_out: usize,
        c_out: usize,
        blocks: BTreeMap<u64, DMatrix<Complex64>>,
    ) -> Result<Self> {
        let d = 1usize << (q_in + q_out);
        for (s, block) in &blocks {
            if block.nrows() != d || block.ncols() != d {
                return Err(Error::InvalidArgument(format!(
                    "Choi block for s={s} is {}x{}, expected {d}x{d}",
                    block.nrows(),
                    block.ncols()
                )));
            }
            if *s >> c_out != 0 {
                return Err(Error::InvalidArgument(format!(
                    "Choi block key {s} exceeds {c_out} classical bits"
                )));
            }
        }
        Ok(ChoiBlocks {
            q_in,
            q_out,
            c_out,
            blocks,
        })
    }

    pub fn q_in(&self) -> usize {
        self.q_in
    }

    pub fn q_out(&self) -> usize {
        self.q_out
    }

    pub fn c_out(&self) -> usize {
        self.c_out
    }

    pub fn dim(&self) -> usize {
        1 << (self.q_in + self.q_out)
    }

    pub fn blocks(&self) -> &BTreeMap<u64, DMatrix<Complex64>> {
        &self.blocks
    }

    /// Sum of block traces; one for a physical fragment.
    pub fn total_trace(&self) -> f64 {
        self.blocks
            .values()
            .map(|b| b.diagonal().iter().map(|z| z.re).sum::<f64>())
            .sum()
    }

    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Doc {
            q_in: usize,
            q_out: usize,
            blocks: BTreeMap<String, Vec<Vec<[f64; 2]>>>,
        }
        let blocks = self
            .blocks
            .iter()
            .map(|(&s, m)| {
                let rows = (0..m.nrows())
                    .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
                    .collect();
                (format_bits(s, self.c_out), rows)
            })
            .collect();
        serde_json::to_string_pretty(&Doc {
            q_in: self.q_in,
            q_out: self.q_out,
            blocks,
        })
        .expect("blocks serialize")
    }

    pub fn from_json(json: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Doc {
            q_in: usize,
            q_out: usize,
            blocks: BTreeMap<String, Vec<Vec<[f64; 2]>>>,
        }
        let doc: Doc = serde_json::from_str(json)?;
        let d = 1usize << (doc.q_in + doc.q_out);
        let c_out = doc.blocks.keys().next().map_or(0, |k| k.len());
        let mut blocks = BTreeMap::new();
        for (key, rows) in doc.blocks {
            if key.len() != c_out {
                return Err(Error::InvalidArgument(format!(
                    "block keys disagree on classical bit count: {key:?}"
                )));
            }
            let s = parse_bits(&key, c_out)?;
            if rows.len() != d || rows.iter().any(|r| r.len() != d) {
                return Err(Error::InvalidArgument(format!(
                    "block {key:?} is not {d}x{d}"
                )));
            }
            let m = DMatrix::from_fn(d, d, |i, j| c64(rows[i][j][0], rows[i][j][1]));
            blocks.insert(s, m);
        }
        ChoiBlocks::new(doc.q_in, doc.q_out, c_out, blocks)
    }
}

/// Measurement operators of every `(variant, sign pattern)` row in canonical
/// order: variants as enumerated, sign patterns ascending.
fn row_operators(keys: &[VariantKey], q_in: usize, q_out: usize) -> Vec<DMatrix<Complex64>> {
    let scale = c64((1u64 << q_in) as f64, 0.0);
    let mut ops = Vec::with_capacity(keys.len() << q_out);
    for key in keys {
        let prep: Vec<DMatrix<Complex64>> =
            key.preps.iter().map(|&p| prep_density(p).transpose()).collect();
        let prep_part = kron_all(&prep);
        for r in 0..1u32 << q_out {
            let proj: Vec<DMatrix<Complex64>> = key
                .bases
                .iter()
                .enumerate()
                .map(|(j, &b)| basis_projector(b, r >> j & 1 == 1))
                .collect();
            ops.push(prep_part.kronecker(&kron_all(&proj)) * scale);
        }
    }
    ops
}

enum Solver {
    Direct(Cholesky<f64, nalgebra::Dyn>),
    Pseudo(nalgebra::SVD<f64, nalgebra::Dyn, nalgebra::Dyn>),
}

impl Solver {
    fn solve(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        match self {
            Solver::Direct(chol) => Ok(chol.solve(b)),
            Solver::Pseudo(svd) => svd
                .solve(b, RANK_CUTOFF)
                .map_err(|e| Error::FitFailed(e.to_string())),
        }
    }
}

fn fit_blocks(
    fragment: &Fragment,
    keys: &[VariantKey],
    observations: &BTreeMap<u64, DVector<f64>>,
) -> Result<ChoiBlocks> {
    let q_in = fragment.quantum_inputs().len();
    let q_out = fragment.quantum_outputs().len();
    let d = 1usize << (q_in + q_out);
    let ops = row_operators(keys, q_in, q_out);
    let rows = ops.len();
    let cols = d * d;
    let mut design = DMatrix::zeros(rows, cols);
    for (row, op) in ops.iter().enumerate() {
        for (col, v) in hermitian_coords(op).into_iter().enumerate() {
            design[(row, col)] = v;
        }
    }
    // One normal-equation factorization serves every block: the design
    // depends only on the fragment's shape, the observations only on s.
    let gram = design.transpose() * &design;
    let solver = match Cholesky::new(gram.clone()) {
        Some(chol) => Solver::Direct(chol),
        None => Solver::Pseudo(gram.svd(true, true)),
    };
    let mut blocks = BTreeMap::new();
    for (&s, y) in observations {
        let rhs = design.transpose() * y;
        let x = solver.solve(&rhs)?;
        blocks.insert(s, hermitian_from_coords(d, &x));
    }
    ChoiBlocks::new(q_in, q_out, fragment.classical_output_count(), blocks)
}

/// Row index of a sign pattern within one variant's group of rows.
fn row_base(key_index: usize, q_out: usize) -> usize {
    key_index << q_out
}

/// Fits Choi blocks to sampled tomography counts by least squares. Every
/// variant must appear exactly once with at least one shot; only classical
/// outcomes that were actually observed receive blocks.
pub fn fit_ansatz(fragment: &Fragment, counts: &[VariantCounts]) -> Result<ChoiBlocks> {
    let keys = VariantKey::enumerate(fragment);
    let q_out = fragment.quantum_outputs().len();
    let index_of: BTreeMap<&VariantKey, usize> = keys.iter().zip(0..).collect();
    let rows = keys.len() << q_out;
    let mut seen = BTreeSet::new();
    let mut observations: BTreeMap<u64, DVector<f64>> = BTreeMap::new();
    for vc in counts {
        let Some(&ki) = index_of.get(&vc.key) else {
            return Err(Error::InvalidArgument(format!(
                "variant {:?} does not belong to this fragment",
                vc.key
            )));
        };
        if !seen.insert(ki) {
            return Err(Error::InvalidArgument(format!(
                "duplicate tomography variant {:?}",
                vc.key
            )));
        }
        if vc.n() == 0 {
            return Err(Error::IncompleteData(format!(
                "variant {:?} has zero shots",
                vc.key
            )));
        }
        for ((r, s), freq) in vc.frequencies() {
            observations
                .entry(s)
                .or_insert_with(|| DVector::zeros(rows))[row_base(ki, q_out) + r as usize] = freq;
        }
    }
    if seen.len() != keys.len() {
        return Err(Error::IncompleteData(format!(
            "{} of {} tomography variants provided",
            seen.len(),
            keys.len()
        )));
    }
    fit_blocks(fragment, &keys, &observations)
}

/// Infinite-shot fit from exact Born distributions; recovers the true Choi
/// blocks exactly because the model class contains them.
pub fn fit_ansatz_exact(fragment: &Fragment) -> Result<ChoiBlocks> {
    fit_ansatz_exact_with_limit(fragment, DEFAULT_STATEVECTOR_LIMIT)
}

pub fn fit_ansatz_exact_with_limit(fragment: &Fragment, limit: usize) -> Result<ChoiBlocks> {
    let keys = VariantKey::enumerate(fragment);
    let q_out = fragment.quantum_outputs().len();
    let rows = keys.len() << q_out;
    let mut observations: BTreeMap<u64, DVector<f64>> = BTreeMap::new();
    for (ki, key) in keys.iter().enumerate() {
        let dist: VariantDistribution =
            exact_variant_distribution_with_limit(fragment, key, limit)?;
        for ((r, s), p) in dist.iter() {
            observations
                .entry(s)
                .or_insert_with(|| DVector::zeros(rows))[row_base(ki, q_out) + r as usize] = p;
        }
    }
    fit_blocks(fragment, &keys, &observations)
}

/// Euclidean projection of a pooled spectrum onto the probability simplex:
/// nonnegative entries summing to one. Iteratively shifts the active
/// entries by the common amount that restores unit sum, then zeroes the
/// most negative entry until none remain; at most `len` rounds.
pub fn project_spectrum(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    if v.is_empty() {
        return v;
    }
    let mut active = vec![true; v.len()];
    let mut count = v.len();
    loop {
        let sum: f64 = v
            .iter()
            .zip(&active)
            .filter_map(|(&x, &a)| a.then_some(x))
            .sum();
        let shift = (1.0 - sum) / count as f64;
        for (x, &a) in v.iter_mut().zip(&active) {
            if a {
                *x += shift;
            }
        }
        let worst = v
            .iter()
            .zip(&active)
            .enumerate()
            .filter(|&(_, (&x, &a))| a && x < 0.0)
            .min_by(|(_, (a, _)), (_, (b, _))| a.total_cmp(b))
            .map(|(i, _)| i);
        match worst {
            None => return v,
            Some(w) => {
                v[w] = 0.0;
                active[w] = false;
                count -= 1;
            }
        }
    }
}

/// Projects fitted blocks to the maximum-likelihood physical estimate:
/// eigenvalues of all blocks are pooled, projected onto the probability
/// simplex, and written back against each block's own eigenvectors. Blocks
/// whose spectrum is zeroed entirely are kept as zero blocks.
pub fn project_maximum_likelihood(fitted: &ChoiBlocks) -> Result<ChoiBlocks> {
    let mut spectra = Vec::new();
    let mut pooled = Vec::new();
    for (&s, block) in fitted.blocks() {
        let eig = block.clone().symmetric_eigen();
        pooled.extend(eig.eigenvalues.iter().copied());
        spectra.push((s, eig));
    }
    let projected = project_spectrum(&pooled);
    let mut offset = 0;
    let mut blocks = BTreeMap::new();
    for (s, eig) in spectra {
        let k = eig.eigenvalues.len();
        let lambda = DVector::from_iterator(
            k,
            projected[offset..offset + k].iter().map(|&x| c64(x, 0.0)),
        );
        offset += k;
        let rebuilt = &eig.eigenvectors
            * DMatrix::from_diagonal(&lambda)
            * eig.eigenvectors.adjoint();
        blocks.insert(s, rebuilt);
    }
    ChoiBlocks::new(fitted.q_in, fitted.q_out, fitted.c_out, blocks)
}

/// Extracts the recombination tensor from Choi blocks: entry
/// `[m_in.., m_out..; s]` is `2^inputs * tr[block_s (P^T(m_in) (x) P(m_out))]`
/// over Pauli products, inputs transposed to match the preparation side.
pub fn tensor_from_choi(
    blocks: &ChoiBlocks,
    axes: Vec<(usize, StitchSide)>,
) -> Result<FragmentTensor> {
    let q_in = blocks.q_in();
    let q_out = blocks.q_out();
    if axes.len() != q_in + q_out {
        return Err(Error::TopologyMismatch(format!(
            "{} axis labels for {} severed wires",
            axes.len(),
            q_in + q_out
        )));
    }
    let scale = (1u64 << q_in) as f64;
    let entries = 4usize.pow((q_in + q_out) as u32);
    // Operators per joint Pauli digit string, inputs most significant.
    let mut ops = Vec::with_capacity(entries);
    for idx in 0..entries {
        let mut digits = vec![0usize; q_in + q_out];
        let mut rest = idx;
        for dgt in digits.iter_mut().rev() {
            *dgt = rest % 4;
            rest /= 4;
        }
        let ins: Vec<DMatrix<Complex64>> =
            digits[..q_in].iter().map(|&m| pauli(m).transpose()).collect();
        let outs: Vec<DMatrix<Complex64>> =
            digits[q_in..].iter().map(|&m| pauli(m)).collect();
        ops.push(kron_all(&ins).kronecker(&kron_all(&outs)));
    }
    let mut tensor_blocks = BTreeMap::new();
    for (&s, block) in blocks.blocks() {
        let mut data = vec![0.0; entries];
        for (slot, op) in ops.iter().enumerate() {
            // tr[B O] with both Hermitian is real.
            let tr: Complex64 = (block * op).diagonal().iter().sum();
            data[slot] = scale * tr.re;
        }
        tensor_blocks.insert(s, data);
    }
    FragmentTensor::new(axes, blocks.c_out(), tensor_blocks)
}

/// Full tomography pipeline from sampled counts: fit, project, extract.
pub fn mlft_tensor(
    fragment: &Fragment,
    counts: &[VariantCounts],
    axes: Vec<(usize, StitchSide)>,
) -> Result<FragmentTensor> {
    let fitted = fit_ansatz(fragment, counts)?;
    let projected = project_maximum_likelihood(&fitted)?;
    tensor_from_choi(&projected, axes)
}

/// Infinite-shot pipeline; agrees with the direct estimator exactly.
pub fn mlft_tensor_exact(
    fragment: &Fragment,
    axes: Vec<(usize, StitchSide)>,
) -> Result<FragmentTensor> {
    mlft_tensor_exact_with_limit(fragment, axes, DEFAULT_STATEVECTOR_LIMIT)
}

pub fn mlft_tensor_exact_with_limit(
    fragment: &Fragment,
    axes: Vec<(usize, StitchSide)>,
    limit: usize,
) -> Result<FragmentTensor> {
    let fitted = fit_ansatz_exact_with_limit(fragment, limit)?;
    let projected = project_maximum_likelihood(&fitted)?;
    tensor_from_choi(&projected, axes)
}
