//! Direct estimation of fragment tensors from tomography data.
//!
//! The pipeline has three steps. Tabulation turns per-variant shot counts
//! into a table of conditional distributions over the classical bits `s`,
//! indexed by one six-valued condition digit per severed axis: `X+ X- Y+ Y-
//! Z+ Z-`, encoding either the prepared eigenstate (input axes) or the
//! measured basis and sign (output axes). Completion fills the two input
//! conditions that are never prepared, using the operator identity
//! `rho(X-) = rho(Z+) + rho(Z-) - rho(X+)` (and its Y analogue), which holds
//! because both eigenstates of an axis sum to the identity. The Pauli
//! transform then consolidates each axis from six conditions to four Pauli
//! components: `M = M+ - M-` and `I` as the average of all three bases'
//! sums, yielding the tensor consumed by [`crate::recombine`].

use std::collections::{BTreeMap, BTreeSet};

use crate::circuit::{Fragment, StitchSide};
use crate::fragsim::{
    exact_variant_distribution_with_limit, MeasBasis, PrepLabel, VariantCounts, VariantKey,
    DEFAULT_STATEVECTOR_LIMIT,
};
use crate::recombine::FragmentTensor;
use crate::{Error, Result};

/// Conditions per axis: `X+ X- Y+ Y- Z+ Z-`.
pub const CONDITION_DIM: usize = 6;

pub(crate) fn prep_digit(p: PrepLabel) -> usize {
    match p {
        PrepLabel::XPlus => 0,
        PrepLabel::YPlus => 2,
        PrepLabel::ZPlus => 4,
        PrepLabel::ZMinus => 5,
    }
}

pub(crate) fn meas_digit(b: MeasBasis, minus: bool) -> usize {
    let base = match b {
        MeasBasis::X => 0,
        MeasBasis::Y => 2,
        MeasBasis::Z => 4,
    };
    base + minus as usize
}

/// Conditional distributions over classical bits, one cell per combination
/// of condition digits (axis 0 most significant). Input-axis cells for the
/// `X-` and `Y-` digits start empty and are filled by
/// [`complete_preparation_conditions`].
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalTable {
    prep_axes: usize,
    meas_axes: usize,
    c_out: usize,
    cells: Vec<Option<BTreeMap<u64, f64>>>,
}

impl ConditionalTable {
    pub fn prep_axes(&self) -> usize {
        self.prep_axes
    }

    pub fn meas_axes(&self) -> usize {
        self.meas_axes
    }

    pub fn axes(&self) -> usize {
        self.prep_axes + self.meas_axes
    }

    pub fn c_out(&self) -> usize {
        self.c_out
    }

    fn index(&self, digits: &[usize]) -> usize {
        debug_assert_eq!(digits.len(), self.axes());
        digits.iter().fold(0, |acc, &d| acc * CONDITION_DIM + d)
    }

    /// Cell at the given condition digits; `None` while incomplete.
    pub fn cell(&self, digits: &[usize]) -> Option<&BTreeMap<u64, f64>> {
        self.cells[self.index(digits)].as_ref()
    }

    fn decompose(&self, mut index: usize) -> Vec<usize> {
        let a = self.axes();
        let mut digits = vec![0; a];
        for d in digits.iter_mut().rev() {
            *d = index % CONDITION_DIM;
            index /= CONDITION_DIM;
        }
        digits
    }
}

fn empty_table(fragment: &Fragment) -> ConditionalTable {
    let prep_axes = fragment.quantum_inputs().len();
    let meas_axes = fragment.quantum_outputs().len();
    ConditionalTable {
        prep_axes,
        meas_axes,
        c_out: fragment.classical_output_count(),
        cells: vec![None; CONDITION_DIM.pow((prep_axes + meas_axes) as u32)],
    }
}

/// Every variant's cells, as `(condition index, outcome sign bits)` pairs.
fn populate<I: Iterator<Item = ((u32, u64), f64)>>(
    table: &mut ConditionalTable,
    key: &VariantKey,
    outcomes: impl Fn() -> I,
) {
    let meas = table.meas_axes;
    let mut digits = vec![0usize; table.axes()];
    for (j, &p) in key.preps.iter().enumerate() {
        digits[j] = prep_digit(p);
    }
    // Mark every sign pattern of this variant observed, even at zero counts:
    // absence of an outcome is data once the variant has been run.
    for r in 0..1u32 << meas {
        for (j, &b) in key.bases.iter().enumerate() {
            digits[table.prep_axes + j] = meas_digit(b, r >> j & 1 == 1);
        }
        let idx = table.index(&digits);
        table.cells[idx].get_or_insert_with(BTreeMap::new);
    }
    for ((r, s), value) in outcomes() {
        for (j, &b) in key.bases.iter().enumerate() {
            digits[table.prep_axes + j] = meas_digit(b, r >> j & 1 == 1);
        }
        let idx = table.index(&digits);
        *table.cells[idx]
            .as_mut()
            .expect("cell marked above")
            .entry(s)
            .or_insert(0.0) += value;
    }
}

fn check_coverage(fragment: &Fragment, seen: &BTreeSet<VariantKey>) -> Result<()> {
    for key in VariantKey::enumerate(fragment) {
        if !seen.contains(&key) {
            return Err(Error::IncompleteData(format!(
                "missing tomography variant {:?}",
                key
            )));
        }
    }
    Ok(())
}

/// Builds the conditional table from sampled counts. Every variant of the
/// fragment must appear exactly once with at least one shot.
pub fn tabulate_conditions(
    fragment: &Fragment,
    counts: &[VariantCounts],
) -> Result<ConditionalTable> {
    let mut table = empty_table(fragment);
    let mut seen = BTreeSet::new();
    for vc in counts {
        if !seen.insert(vc.key.clone()) {
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
        populate(&mut table, &vc.key, || vc.frequencies());
    }
    check_coverage(fragment, &seen)?;
    Ok(table)
}

/// Builds the conditional table from exact Born distributions, the
/// infinite-shot limit of [`tabulate_conditions`].
pub fn tabulate_conditions_exact(fragment: &Fragment) -> Result<ConditionalTable> {
    tabulate_conditions_exact_with_limit(fragment, DEFAULT_STATEVECTOR_LIMIT)
}

pub fn tabulate_conditions_exact_with_limit(
    fragment: &Fragment,
    limit: usize,
) -> Result<ConditionalTable> {
    let mut table = empty_table(fragment);
    for key in VariantKey::enumerate(fragment) {
        let dist = exact_variant_distribution_with_limit(fragment, &key, limit)?;
        populate(&mut table, &key, || dist.iter());
    }
    Ok(table)
}

/// Fills the `X-` and `Y-` digits of every input axis from the three
/// conditions that were prepared: the completed cell is
/// `Z+ cell + Z- cell - (opposite sign) cell`, applied one axis at a time,
/// which extends multilinearly to any number of input axes.
pub fn complete_preparation_conditions(table: &mut ConditionalTable) -> Result<()> {
    let axes = table.axes();
    for axis in 0..table.prep_axes {
        let stride = CONDITION_DIM.pow((axes - 1 - axis) as u32);
        let outer = CONDITION_DIM.pow(axis as u32);
        for o in 0..outer {
            for inner in 0..stride {
                let at = |d: usize| (o * CONDITION_DIM + d) * stride + inner;
                for (missing, plus) in [(1usize, 0usize), (3, 2)] {
                    let (Some(zp), Some(zm), Some(p)) = (
                        table.cells[at(4)].as_ref(),
                        table.cells[at(5)].as_ref(),
                        table.cells[at(plus)].as_ref(),
                    ) else {
                        // Sources involving later axes' missing digits fill
                        // on those axes' own passes.
                        continue;
                    };
                    let mut cell = zp.clone();
                    for (&s, &v) in zm {
                        *cell.entry(s).or_insert(0.0) += v;
                    }
                    for (&s, &v) in p {
                        *cell.entry(s).or_insert(0.0) -= v;
                    }
                    table.cells[at(missing)] = Some(cell);
                }
            }
        }
    }
    for (idx, cell) in table.cells.iter().enumerate() {
        if cell.is_none() {
            return Err(Error::IncompleteData(format!(
                "condition {:?} still unpopulated after completion",
                table.decompose(idx)
            )));
        }
    }
    Ok(())
}

/// Per-axis map from the six conditions to the four Pauli components: the
/// identity row averages all bases' eigenstate sums, each Pauli row takes
/// the signed difference of its own eigenstates.
const PAULI_FROM_CONDITION: [[f64; 6]; 4] = {
    const T: f64 = 1.0 / 3.0;
    [
        [T, T, T, T, T, T],
        [1.0, -1.0, 0.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, 1.0, -1.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, 0.0, 1.0, -1.0],
    ]
};

/// Transforms a completed conditional table into the fragment's Pauli
/// tensor, one axis at a time.
pub fn pauli_tensor(
    table: &ConditionalTable,
    axes: Vec<(usize, StitchSide)>,
) -> Result<FragmentTensor> {
    if axes.len() != table.axes() {
        return Err(Error::TopologyMismatch(format!(
            "{} axis labels for a {}-axis table",
            axes.len(),
            table.axes()
        )));
    }
    let mut cells: Vec<BTreeMap<u64, f64>> = Vec::with_capacity(table.cells.len());
    for (idx, cell) in table.cells.iter().enumerate() {
        match cell {
            Some(c) => cells.push(c.clone()),
            None => {
                return Err(Error::IncompleteData(format!(
                    "condition {:?} unpopulated; complete the table first",
                    table.decompose(idx)
                )))
            }
        }
    }

    // Mixed-radix reindex: processed axes have 4 digits, pending ones 6.
    let total = table.axes();
    for axis in 0..total {
        let inner: usize = CONDITION_DIM.pow((total - 1 - axis) as u32);
        let outer = cells.len() / (CONDITION_DIM * inner);
        let mut next: Vec<BTreeMap<u64, f64>> = vec![BTreeMap::new(); outer * 4 * inner];
        for o in 0..outer {
            for m in 0..4 {
                let row = &PAULI_FROM_CONDITION[m];
                for i in 0..inner {
                    let target = &mut next[(o * 4 + m) * inner + i];
                    for (d, &coef) in row.iter().enumerate() {
                        if coef == 0.0 {
                            continue;
                        }
                        for (&s, &v) in &cells[(o * CONDITION_DIM + d) * inner + i] {
                            *target.entry(s).or_insert(0.0) += coef * v;
                        }
                    }
                }
            }
        }
        cells = next;
    }

    let mut blocks: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    for (idx, cell) in cells.iter().enumerate() {
        for (&s, &v) in cell {
            blocks
                .entry(s)
                .or_insert_with(|| vec![0.0; cells.len()])[idx] = v;
        }
    }
    FragmentTensor::new(axes, table.c_out(), blocks)
}

/// Full direct pipeline from sampled counts: tabulate, complete, transform.
pub fn direct_tensor(
    fragment: &Fragment,
    counts: &[VariantCounts],
    axes: Vec<(usize, StitchSide)>,
) -> Result<FragmentTensor> {
    let mut table = tabulate_conditions(fragment, counts)?;
    complete_preparation_conditions(&mut table)?;
    pauli_tensor(&table, axes)
}

/// Infinite-shot direct pipeline from exact Born distributions.
pub fn direct_tensor_exact(
    fragment: &Fragment,
    axes: Vec<(usize, StitchSide)>,
) -> Result<FragmentTensor> {
    direct_tensor_exact_with_limit(fragment, axes, DEFAULT_STATEVECTOR_LIMIT)
}

pub fn direct_tensor_exact_with_limit(
    fragment: &Fragment,
    axes: Vec<(usize, StitchSide)>,
    limit: usize,
) -> Result<FragmentTensor> {
    let mut table = tabulate_conditions_exact_with_limit(fragment, limit)?;
    complete_preparation_conditions(&mut table)?;
    pauli_tensor(&table, axes)
}
