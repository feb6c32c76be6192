//! Circuits, cut points, and the fragment graph produced by cutting.
//!
//! A [`CutPoint`] `(wire, position)` severs `wire` immediately after the gate
//! at `position` (which must act on that wire). Cutting splits every wire
//! into segments; gates connect the segments they touch, and the connected
//! components of that adjacency graph become [`Fragment`]s. Each cut turns
//! into a [`Stitch`] joining the upstream fragment's severed output to the
//! downstream fragment's severed input.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A unitary gate on an ordered list of target qubits. The matrix is written
/// in the basis `|t0 t1 ..>` with `targets[0]` as the most significant bit.
#[derive(Debug, Clone, PartialEq)]
pub struct Gate {
    matrix: DMatrix<Complex64>,
    targets: Vec<usize>,
}

const UNITARITY_TOL: f64 = 1e-10;

impl Gate {
    /// Validates shape (square, `2^k` for `k` distinct targets) and
    /// unitarity to within `1e-10`.
    pub fn new(matrix: DMatrix<Complex64>, targets: Vec<usize>) -> Result<Self> {
        if targets.is_empty() {
            return Err(Error::InvalidArgument("gate has no targets".into()));
        }
        let mut seen = targets.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != targets.len() {
            return Err(Error::InvalidArgument(format!(
                "gate targets {targets:?} are not distinct"
            )));
        }
        let dim = 1usize << targets.len();
        if matrix.nrows() != dim || matrix.ncols() != dim {
            return Err(Error::InvalidArgument(format!(
                "gate on {} targets needs a {dim}x{dim} matrix, got {}x{}",
                targets.len(),
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let gram = matrix.adjoint() * &matrix;
        for i in 0..dim {
            for j in 0..dim {
                let expect = if i == j { 1.0 } else { 0.0 };
                if (gram[(i, j)] - Complex64::new(expect, 0.0)).norm() > UNITARITY_TOL {
                    return Err(Error::InvalidArgument(format!(
                        "gate matrix is not unitary (U^H U deviates at ({i},{j}))"
                    )));
                }
            }
        }
        Ok(Gate { matrix, targets })
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    pub fn targets(&self) -> &[usize] {
        &self.targets
    }

    pub fn arity(&self) -> usize {
        self.targets.len()
    }
}

/// An ordered list of gates on a fixed number of qubits.
#[derive(Debug, Clone, PartialEq)]
pub struct Circuit {
    num_qubits: usize,
    gates: Vec<Gate>,
}

impl Circuit {
    pub fn new(num_qubits: usize) -> Self {
        Circuit {
            num_qubits,
            gates: Vec::new(),
        }
    }

    pub fn with_gates(num_qubits: usize, gates: Vec<Gate>) -> Result<Self> {
        let mut c = Circuit::new(num_qubits);
        for g in gates {
            c.push(g)?;
        }
        Ok(c)
    }

    pub fn push(&mut self, gate: Gate) -> Result<()> {
        if let Some(&t) = gate.targets().iter().find(|&&t| t >= self.num_qubits) {
            return Err(Error::InvalidGate {
                index: self.gates.len(),
                reason: format!("target {t} out of range for {} qubits", self.num_qubits),
            });
        }
        self.gates.push(gate);
        Ok(())
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }
}

/// Severs `wire` immediately after the gate at index `position`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CutPoint {
    pub wire: usize,
    pub position: usize,
}

/// Draws a Haar-distributed unitary: a Ginibre matrix of i.i.d. standard
/// complex normals is QR-decomposed and each column of Q is multiplied by
/// the phase `conj(R_jj)/|R_jj|`, which removes the sign ambiguity of the
/// factorization (right-multiplying by a diagonal phase that depends only on
/// R leaves the distribution Haar).
pub fn haar_random_unitary(dim: usize, rng: &mut impl Rng) -> Result<DMatrix<Complex64>> {
    if dim < 2 || !dim.is_power_of_two() {
        return Err(Error::InvalidArgument(format!(
            "unitary dimension must be a power of two >= 2, got {dim}"
        )));
    }
    let ginibre = DMatrix::from_fn(dim, dim, |_, _| {
        Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    });
    let qr = ginibre.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..dim {
        let rjj = r[(j, j)];
        let phase = if rjj.norm() > 0.0 {
            rjj.conj() / rjj.norm()
        } else {
            Complex64::new(1.0, 0.0)
        };
        for i in 0..dim {
            q[(i, j)] *= phase;
        }
    }
    Ok(q)
}

/// Splits `num_qubits` into `num_fragments` contiguous clusters as evenly as
/// possible, larger clusters first. Every cluster must hold at least two
/// qubits so inter-cluster gates touch two distinct wires.
pub fn cluster_sizes(num_qubits: usize, num_fragments: usize) -> Result<Vec<usize>> {
    if num_fragments < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 fragments, got {num_fragments}"
        )));
    }
    if num_qubits < 2 * num_fragments {
        return Err(Error::InvalidArgument(format!(
            "{num_qubits} qubits cannot form {num_fragments} clusters of >= 2 qubits"
        )));
    }
    let base = num_qubits / num_fragments;
    let rem = num_qubits % num_fragments;
    Ok((0..num_fragments)
        .map(|j| base + usize::from(j < rem))
        .collect())
}

/// Builds a clustered random circuit together with the cut points that sever
/// it into one fragment per cluster.
///
/// Layer structure: a Haar unitary on each cluster, a Haar two-qubit gate
/// joining each adjacent cluster pair (last wire of one cluster, first wire
/// of the next), and a final Haar unitary on each cluster. Each joining gate
/// is placed before the downstream cluster's first-layer unitary and the cut
/// sits on the downstream cluster's first wire immediately after the joining
/// gate, so the gate ends up in the upstream fragment and carries one fresh
/// wire of the downstream cluster with it.
pub fn build_clustered_ruc(
    num_qubits: usize,
    num_fragments: usize,
    rng: &mut impl Rng,
) -> Result<(Circuit, Vec<CutPoint>)> {
    let sizes = cluster_sizes(num_qubits, num_fragments)?;
    let mut starts = Vec::with_capacity(num_fragments);
    let mut acc = 0;
    for &s in &sizes {
        starts.push(acc);
        acc += s;
    }

    let cluster_gate = |j: usize, rng: &mut _| -> Result<Gate> {
        let targets: Vec<usize> = (starts[j]..starts[j] + sizes[j]).collect();
        Gate::new(haar_random_unitary(1 << sizes[j], rng)?, targets)
    };

    let mut circuit = Circuit::new(num_qubits);
    let mut cuts = Vec::with_capacity(num_fragments - 1);
    circuit.push(cluster_gate(0, rng)?)?;
    for j in 0..num_fragments - 1 {
        let last_of_j = starts[j] + sizes[j] - 1;
        let first_of_next = starts[j + 1];
        let joiner = Gate::new(haar_random_unitary(4, rng)?, vec![last_of_j, first_of_next])?;
        cuts.push(CutPoint {
            wire: first_of_next,
            position: circuit.gates().len(),
        });
        circuit.push(joiner)?;
        circuit.push(cluster_gate(j + 1, rng)?)?;
    }
    for j in 0..num_fragments {
        circuit.push(cluster_gate(j, rng)?)?;
    }
    Ok((circuit, cuts))
}

/// One piece of a cut circuit. Local wires are numbered 0.. in order of
/// (original wire, segment); each local wire is exactly one of quantum/
/// classical on the input side and on the output side. A wire touched by two
/// cuts can be both a quantum input and a quantum output.
#[derive(Debug, Clone, PartialEq)]
pub struct Fragment {
    subcircuit: Circuit,
    quantum_inputs: Vec<usize>,
    quantum_outputs: Vec<usize>,
    classical_output_wires: Vec<usize>,
}

impl Fragment {
    pub fn new(
        subcircuit: Circuit,
        quantum_inputs: Vec<usize>,
        quantum_outputs: Vec<usize>,
    ) -> Result<Self> {
        let nq = subcircuit.num_qubits();
        for list in [&quantum_inputs, &quantum_outputs] {
            if !list.windows(2).all(|w| w[0] < w[1]) {
                return Err(Error::InvalidArgument(
                    "fragment wire lists must be strictly increasing".into(),
                ));
            }
            if list.last().is_some_and(|&w| w >= nq) {
                return Err(Error::InvalidArgument(format!(
                    "fragment wire list {list:?} out of range for {nq} qubits"
                )));
            }
        }
        let classical_output_wires = (0..nq)
            .filter(|w| !quantum_outputs.contains(w))
            .collect();
        Ok(Fragment {
            subcircuit,
            quantum_inputs,
            quantum_outputs,
            classical_output_wires,
        })
    }

    pub fn subcircuit(&self) -> &Circuit {
        &self.subcircuit
    }

    pub fn num_qubits(&self) -> usize {
        self.subcircuit.num_qubits()
    }

    /// Local wires prepared in tomography states (severed by an upstream cut).
    pub fn quantum_inputs(&self) -> &[usize] {
        &self.quantum_inputs
    }

    /// Local wires measured in tomography bases (severed by a downstream cut).
    pub fn quantum_outputs(&self) -> &[usize] {
        &self.quantum_outputs
    }

    /// Local wires measured in the computational basis, in bitstring order.
    pub fn classical_output_wires(&self) -> &[usize] {
        &self.classical_output_wires
    }

    pub fn classical_input_count(&self) -> usize {
        self.num_qubits() - self.quantum_inputs.len()
    }

    pub fn classical_output_count(&self) -> usize {
        self.classical_output_wires.len()
    }

    /// Number of tomography variants: 4 preparations per quantum input times
    /// 3 measurement bases per quantum output.
    pub fn variant_count(&self) -> u64 {
        4u64.pow(self.quantum_inputs.len() as u32) * 3u64.pow(self.quantum_outputs.len() as u32)
    }
}

/// Which side of a stitch a tensor axis belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StitchSide {
    Input,
    Output,
}

/// Joins `from = (fragment, output slot)` to `to = (fragment, input slot)`,
/// where slots index the fragments' `quantum_outputs`/`quantum_inputs`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Stitch {
    pub from: (usize, usize),
    pub to: (usize, usize),
}

/// Fragments plus the stitches that reconnect them and the placement of each
/// fragment's classical output bits in the original circuit's bitstring.
#[derive(Debug, Clone)]
pub struct FragmentGraph {
    num_qubits: usize,
    fragments: Vec<Fragment>,
    stitches: Vec<Stitch>,
    output_order: Vec<Vec<usize>>,
}

impl FragmentGraph {
    /// Validates that every fragment quantum input/output slot is used by
    /// exactly one stitch and that `output_order` partitions the original
    /// wires.
    pub fn new(
        num_qubits: usize,
        fragments: Vec<Fragment>,
        stitches: Vec<Stitch>,
        output_order: Vec<Vec<usize>>,
    ) -> Result<Self> {
        let mut seen_out: Vec<Vec<bool>> = fragments
            .iter()
            .map(|f| vec![false; f.quantum_outputs().len()])
            .collect();
        let mut seen_in: Vec<Vec<bool>> = fragments
            .iter()
            .map(|f| vec![false; f.quantum_inputs().len()])
            .collect();
        for (si, st) in stitches.iter().enumerate() {
            for (frag, slot, seen, what) in [
                (st.from.0, st.from.1, &mut seen_out, "output"),
                (st.to.0, st.to.1, &mut seen_in, "input"),
            ] {
                let slots = seen
                    .get_mut(frag)
                    .ok_or_else(|| Error::InvalidArgument(format!("stitch {si}: no fragment {frag}")))?;
                let used = slots.get_mut(slot).ok_or_else(|| {
                    Error::InvalidArgument(format!("stitch {si}: fragment {frag} has no {what} slot {slot}"))
                })?;
                if std::mem::replace(used, true) {
                    return Err(Error::InvalidArgument(format!(
                        "stitch {si}: {what} slot {slot} of fragment {frag} already stitched"
                    )));
                }
            }
        }
        if seen_out.iter().flatten().any(|&s| !s) || seen_in.iter().flatten().any(|&s| !s) {
            return Err(Error::InvalidArgument(
                "some fragment quantum inputs/outputs are not stitched".into(),
            ));
        }
        if output_order.len() != fragments.len() {
            return Err(Error::InvalidArgument(
                "output_order must list wires for every fragment".into(),
            ));
        }
        let mut covered = vec![false; num_qubits];
        for (f, wires) in output_order.iter().enumerate() {
            if wires.len() != fragments[f].classical_output_count() {
                return Err(Error::InvalidArgument(format!(
                    "output_order for fragment {f} has {} wires, fragment has {} classical outputs",
                    wires.len(),
                    fragments[f].classical_output_count()
                )));
            }
            for &w in wires {
                if w >= num_qubits || std::mem::replace(&mut covered[w], true) {
                    return Err(Error::InvalidArgument(format!(
                        "output_order wire {w} out of range or repeated"
                    )));
                }
            }
        }
        if covered.iter().any(|&c| !c) {
            return Err(Error::InvalidArgument(
                "output_order does not cover every original wire".into(),
            ));
        }
        Ok(FragmentGraph {
            num_qubits,
            fragments,
            stitches,
            output_order,
        })
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn fragments(&self) -> &[Fragment] {
        &self.fragments
    }

    pub fn stitches(&self) -> &[Stitch] {
        &self.stitches
    }

    pub fn num_cuts(&self) -> usize {
        self.stitches.len()
    }

    /// Original-wire position of each classical output bit, per fragment, in
    /// `classical_output_wires` order.
    pub fn output_order(&self) -> &[Vec<usize>] {
        &self.output_order
    }

    /// Sum over fragments of `4^(quantum inputs) * 3^(quantum outputs)`.
    pub fn total_variants(&self) -> u64 {
        self.fragments.iter().map(Fragment::variant_count).sum()
    }

    /// Cut axes incident on a fragment: one per quantum input (in slot
    /// order), then one per quantum output, each naming its stitch.
    pub fn fragment_axes(&self, fragment: usize) -> Vec<(usize, StitchSide)> {
        let frag = &self.fragments[fragment];
        let mut axes = Vec::with_capacity(frag.quantum_inputs().len() + frag.quantum_outputs().len());
        for slot in 0..frag.quantum_inputs().len() {
            let si = self
                .stitches
                .iter()
                .position(|st| st.to == (fragment, slot))
                .expect("validated: every input slot is stitched");
            axes.push((si, StitchSide::Input));
        }
        for slot in 0..frag.quantum_outputs().len() {
            let si = self
                .stitches
                .iter()
                .position(|st| st.from == (fragment, slot))
                .expect("validated: every output slot is stitched");
            axes.push((si, StitchSide::Output));
        }
        axes
    }
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra] = rb;
        }
    }
}

/// Cuts a circuit into fragments. Every cut must join two distinct
/// fragments; a cut whose two sides stay connected through other wires does
/// not disconnect anything and makes the cut set invalid.
pub fn cut_circuit(circuit: &Circuit, cuts: &[CutPoint]) -> Result<FragmentGraph> {
    if cuts.is_empty() {
        return Err(Error::CutSetInvalid("empty cut list".into()));
    }
    let nq = circuit.num_qubits();
    let gates = circuit.gates();

    let mut per_wire: Vec<Vec<usize>> = vec![Vec::new(); nq];
    for cut in cuts {
        if cut.wire >= nq {
            return Err(Error::InvalidArgument(format!(
                "cut wire {} out of range for {nq} qubits",
                cut.wire
            )));
        }
        if cut.position >= gates.len() {
            return Err(Error::InvalidArgument(format!(
                "cut position {} out of range for {} gates",
                cut.position,
                gates.len()
            )));
        }
        if !gates[cut.position].targets().contains(&cut.wire) {
            return Err(Error::InvalidArgument(format!(
                "gate {} does not act on cut wire {}",
                cut.position, cut.wire
            )));
        }
        if per_wire[cut.wire].contains(&cut.position) {
            return Err(Error::InvalidArgument(format!(
                "duplicate cut at wire {} position {}",
                cut.wire, cut.position
            )));
        }
        per_wire[cut.wire].push(cut.position);
    }
    for positions in &mut per_wire {
        positions.sort_unstable();
    }

    // Wire w splits into per_wire[w].len() + 1 segments; the gate at index i
    // lies in segment (number of cuts on w strictly before i), since a cut at
    // position p sits between gate p and gate p + 1.
    let mut seg_offset = vec![0usize; nq + 1];
    for w in 0..nq {
        seg_offset[w + 1] = seg_offset[w] + per_wire[w].len() + 1;
    }
    let seg_id = |w: usize, k: usize| seg_offset[w] + k;
    let seg_at = |w: usize, gate_idx: usize| per_wire[w].partition_point(|&p| p < gate_idx);

    let num_segments = seg_offset[nq];
    let mut uf = UnionFind::new(num_segments);
    for (gi, gate) in gates.iter().enumerate() {
        let first = seg_id(gate.targets()[0], seg_at(gate.targets()[0], gi));
        for &t in &gate.targets()[1..] {
            uf.union(first, seg_id(t, seg_at(t, gi)));
        }
    }

    // Components, ordered by their smallest (wire, segment) pair. Iterating
    // segments in seg id order visits (wire, segment) lexicographically.
    let mut component_of_root: BTreeMap<usize, usize> = BTreeMap::new();
    let mut members: Vec<Vec<(usize, usize)>> = Vec::new();
    for w in 0..nq {
        for k in 0..per_wire[w].len() + 1 {
            let root = uf.find(seg_id(w, k));
            let comp = *component_of_root.entry(root).or_insert_with(|| {
                members.push(Vec::new());
                members.len() - 1
            });
            members[comp].push((w, k));
        }
    }
    if members.len() < 2 {
        return Err(Error::CutSetInvalid(
            "cuts do not disconnect the circuit".into(),
        ));
    }

    let mut local_index: BTreeMap<(usize, usize), (usize, usize)> = BTreeMap::new();
    for (comp, segs) in members.iter().enumerate() {
        for (local, &seg) in segs.iter().enumerate() {
            local_index.insert(seg, (comp, local));
        }
    }

    let mut fragments = Vec::with_capacity(members.len());
    let mut output_order = Vec::with_capacity(members.len());
    for segs in &members {
        let mut sub = Circuit::new(segs.len());
        for (gi, gate) in gates.iter().enumerate() {
            let (comp, _) = local_index[&(gate.targets()[0], seg_at(gate.targets()[0], gi))];
            if comp != local_index[&segs[0]].0 {
                continue;
            }
            let targets = gate
                .targets()
                .iter()
                .map(|&t| local_index[&(t, seg_at(t, gi))].1)
                .collect();
            sub.push(Gate::new(gate.matrix().clone(), targets)?)?;
        }
        let mut quantum_inputs = Vec::new();
        let mut quantum_outputs = Vec::new();
        let mut classical_wires = Vec::new();
        for (local, &(w, k)) in segs.iter().enumerate() {
            if k > 0 {
                quantum_inputs.push(local);
            }
            if k < per_wire[w].len() {
                quantum_outputs.push(local);
            } else {
                classical_wires.push(w);
            }
        }
        fragments.push(Fragment::new(sub, quantum_inputs, quantum_outputs)?);
        output_order.push(classical_wires);
    }

    // Stitches in time order (cut position, then wire).
    let mut ordered_cuts: Vec<&CutPoint> = cuts.iter().collect();
    ordered_cuts.sort_unstable_by_key(|c| (c.position, c.wire));
    let mut stitches = Vec::with_capacity(cuts.len());
    for cut in ordered_cuts {
        let k = per_wire[cut.wire]
            .binary_search(&cut.position)
            .expect("cut position recorded above");
        let (up_frag, up_local) = local_index[&(cut.wire, k)];
        let (down_frag, down_local) = local_index[&(cut.wire, k + 1)];
        if up_frag == down_frag {
            return Err(Error::CutSetInvalid(format!(
                "cut at wire {} position {} joins fragment {up_frag} to itself",
                cut.wire, cut.position
            )));
        }
        let from_slot = fragments[up_frag]
            .quantum_outputs()
            .iter()
            .position(|&l| l == up_local)
            .expect("severed segment is a quantum output");
        let to_slot = fragments[down_frag]
            .quantum_inputs()
            .iter()
            .position(|&l| l == down_local)
            .expect("severed segment is a quantum input");
        stitches.push(Stitch {
            from: (up_frag, from_slot),
            to: (down_frag, to_slot),
        });
    }

    FragmentGraph::new(nq, fragments, stitches, output_order)
}

#[derive(Serialize, Deserialize)]
struct GateJson {
    targets: Vec<usize>,
    matrix: Vec<Vec<[f64; 2]>>,
}

#[derive(Serialize, Deserialize)]
struct CircuitJson {
    num_qubits: usize,
    gates: Vec<GateJson>,
}

/// Serializes a circuit with matrix entries as `[re, im]` pairs. f64 values
/// print in shortest round-trip form, so parsing the output reproduces the
/// circuit bit-exactly.
pub fn circuit_to_json(circuit: &Circuit) -> String {
    let doc = CircuitJson {
        num_qubits: circuit.num_qubits(),
        gates: circuit
            .gates()
            .iter()
            .map(|g| GateJson {
                targets: g.targets().to_vec(),
                matrix: (0..g.matrix().nrows())
                    .map(|i| {
                        (0..g.matrix().ncols())
                            .map(|j| [g.matrix()[(i, j)].re, g.matrix()[(i, j)].im])
                            .collect()
                    })
                    .collect(),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&doc).expect("circuit serializes")
}

/// Parses [`circuit_to_json`] output, validating shapes and unitarity. Gate
/// validation failures name the offending gate index.
pub fn circuit_from_json(json: &str) -> Result<Circuit> {
    let doc: CircuitJson = serde_json::from_str(json)?;
    let mut circuit = Circuit::new(doc.num_qubits);
    for (gi, gate) in doc.gates.into_iter().enumerate() {
        let rows = gate.matrix.len();
        if gate.matrix.iter().any(|row| row.len() != rows) {
            return Err(Error::InvalidGate {
                index: gi,
                reason: "matrix is not square".into(),
            });
        }
        let matrix = DMatrix::from_fn(rows, rows, |i, j| {
            Complex64::new(gate.matrix[i][j][0], gate.matrix[i][j][1])
        });
        let gate = Gate::new(matrix, gate.targets).map_err(|e| Error::InvalidGate {
            index: gi,
            reason: e.to_string(),
        })?;
        circuit.push(gate)?;
    }
    Ok(circuit)
}

pub fn cuts_to_json(cuts: &[CutPoint]) -> String {
    serde_json::to_string_pretty(cuts).expect("cut list serializes")
}

pub fn cuts_from_json(json: &str) -> Result<Vec<CutPoint>> {
    Ok(serde_json::from_str(json)?)
}


#[cfg(test)]
mod tests {
    use super::test_fixtures::*;
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn haar_unitary_is_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for dim in [2, 4, 8] {
            let u = haar_random_unitary(dim, &mut rng).unwrap();
            let gram = u.adjoint() * &u;
            for i in 0..dim {
                for j in 0..dim {
                    let expect = if i == j { 1.0 } else { 0.0 };
                    assert!(
                        (gram[(i, j)] - Complex64::new(expect, 0.0)).norm() < 1e-12,
                        "U^H U != I at ({i},{j}) for dim {dim}"
                    );
                }
            }
        }
    }

    #[test]
    fn haar_unitary_is_deterministic_per_seed() {
        let a = haar_random_unitary(8, &mut ChaCha8Rng::seed_from_u64(42)).unwrap();
        let b = haar_random_unitary(8, &mut ChaCha8Rng::seed_from_u64(42)).unwrap();
        assert_eq!(a, b);
        let c = haar_random_unitary(8, &mut ChaCha8Rng::seed_from_u64(43)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn haar_unitary_rejects_bad_dims() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for dim in [0, 1, 3, 6] {
            assert!(haar_random_unitary(dim, &mut rng).is_err(), "dim {dim}");
        }
    }

    /// First moment of the Haar character: the average of |tr U|^2 over the
    /// unitary group is 1 for every dimension. Checked by Monte Carlo with a
    /// 5-standard-error band.
    #[test]
    fn haar_trace_moment_matches_group_average() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let samples = 4000;
        let values: Vec<f64> = (0..samples)
            .map(|_| {
                let u = haar_random_unitary(2, &mut rng).unwrap();
                let tr = u[(0, 0)] + u[(1, 1)];
                tr.norm_sqr()
            })
            .collect();
        let mean = values.iter().sum::<f64>() / samples as f64;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / samples as f64;
        let se = (var / samples as f64).sqrt();
        assert!(
            (mean - 1.0).abs() < 5.0 * se,
            "|tr U|^2 mean {mean} departs from 1 by more than 5 SE ({se})"
        );
    }

    #[test]
    fn cluster_sizes_balance_with_larger_first() {
        assert_eq!(cluster_sizes(10, 3).unwrap(), vec![4, 3, 3]);
        assert_eq!(cluster_sizes(4, 2).unwrap(), vec![2, 2]);
        assert_eq!(cluster_sizes(14, 3).unwrap(), vec![5, 5, 4]);
        assert_eq!(cluster_sizes(12, 4).unwrap(), vec![3, 3, 3, 3]);
        assert!(cluster_sizes(5, 3).is_err());
        assert!(cluster_sizes(10, 1).is_err());
    }

    #[test]
    fn clustered_ruc_has_expected_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (circuit, cuts) = build_clustered_ruc(10, 3, &mut rng).unwrap();
        assert_eq!(circuit.num_qubits(), 10);
        // F first-layer + (F-1) joining + F final-layer gates.
        assert_eq!(circuit.gates().len(), 8);
        assert_eq!(cuts.len(), 2);
        for cut in &cuts {
            assert!(circuit.gates()[cut.position].targets().contains(&cut.wire));
            assert_eq!(circuit.gates()[cut.position].arity(), 2);
        }
        // Cuts sit on the first wire of clusters B and C.
        assert_eq!(cuts[0].wire, 4);
        assert_eq!(cuts[1].wire, 7);
    }

    #[test]
    fn cutting_the_clustered_ruc_yields_a_chain() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (circuit, cuts) = build_clustered_ruc(10, 3, &mut rng).unwrap();
        let graph = cut_circuit(&circuit, &cuts).unwrap();
        assert_eq!(graph.fragments().len(), 3);
        let incidences: Vec<(usize, usize)> = graph
            .fragments()
            .iter()
            .map(|f| (f.quantum_inputs().len(), f.quantum_outputs().len()))
            .collect();
        assert_eq!(incidences, vec![(0, 1), (1, 1), (1, 0)]);
        let c_out: Vec<usize> = graph
            .fragments()
            .iter()
            .map(Fragment::classical_output_count)
            .collect();
        assert_eq!(c_out, vec![4, 3, 3]);
        assert_eq!(graph.total_variants(), 19);
        assert_eq!(
            graph.stitches(),
            &[
                Stitch { from: (0, 0), to: (1, 0) },
                Stitch { from: (1, 0), to: (2, 0) }
            ]
        );
        // The joining gate lands in the upstream fragment, which therefore
        // holds one more wire than its cluster.
        assert_eq!(graph.fragments()[0].num_qubits(), 5);
        assert_eq!(graph.fragments()[1].num_qubits(), 4);
        assert_eq!(graph.fragments()[2].num_qubits(), 3);
    }

    #[test]
    fn ghz_cut_produces_the_two_expected_fragments() {
        let graph = cut_circuit(&ghz_circuit(), &ghz_cut()).unwrap();
        assert_eq!(graph.fragments().len(), 2);
        let a = &graph.fragments()[0];
        let b = &graph.fragments()[1];
        assert_eq!((a.quantum_inputs().len(), a.quantum_outputs().len()), (0, 1));
        assert_eq!((b.quantum_inputs().len(), b.quantum_outputs().len()), (1, 0));
        assert_eq!(a.classical_output_count(), 1);
        assert_eq!(b.classical_output_count(), 2);
        assert_eq!(graph.output_order(), &[vec![0], vec![1, 2]]);
        assert_eq!(graph.total_variants(), 7);
        assert_eq!(graph.stitches(), &[Stitch { from: (0, 0), to: (1, 0) }]);
        assert_eq!(
            graph.fragment_axes(0),
            vec![(0, StitchSide::Output)]
        );
        assert_eq!(graph.fragment_axes(1), vec![(0, StitchSide::Input)]);
    }

    #[test]
    fn empty_cut_list_is_invalid() {
        assert!(matches!(
            cut_circuit(&ghz_circuit(), &[]),
            Err(Error::CutSetInvalid(_))
        ));
    }

    #[test]
    fn cut_on_wire_the_gate_does_not_touch_is_rejected() {
        let err = cut_circuit(&ghz_circuit(), &[CutPoint { wire: 2, position: 0 }]);
        assert!(matches!(err, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn duplicate_cut_is_rejected() {
        let cuts = vec![
            CutPoint { wire: 1, position: 1 },
            CutPoint { wire: 1, position: 1 },
        ];
        assert!(matches!(
            cut_circuit(&ghz_circuit(), &cuts),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn cut_that_does_not_disconnect_is_invalid() {
        // Two CNOTs on the same pair: cutting between them leaves both sides
        // joined through the other wire.
        let mut c = Circuit::new(2);
        c.push(Gate::new(cnot_matrix(), vec![0, 1]).unwrap()).unwrap();
        c.push(Gate::new(cnot_matrix(), vec![0, 1]).unwrap()).unwrap();
        let err = cut_circuit(&c, &[CutPoint { wire: 0, position: 0 }]);
        assert!(matches!(err, Err(Error::CutSetInvalid(_))));
    }

    #[test]
    fn wire_with_two_cuts_is_both_input_and_output() {
        // Three CNOTs in a row along a chain 0-1, 1-2, 1-3 with wire 1 cut
        // after the first and second gates: the middle fragment's wire is
        // severed on both sides.
        let mut c = Circuit::new(4);
        c.push(Gate::new(cnot_matrix(), vec![0, 1]).unwrap()).unwrap();
        c.push(Gate::new(cnot_matrix(), vec![1, 2]).unwrap()).unwrap();
        c.push(Gate::new(cnot_matrix(), vec![1, 3]).unwrap()).unwrap();
        let cuts = vec![
            CutPoint { wire: 1, position: 0 },
            CutPoint { wire: 1, position: 1 },
        ];
        let graph = cut_circuit(&c, &cuts).unwrap();
        assert_eq!(graph.fragments().len(), 3);
        let middle = &graph.fragments()[1];
        assert_eq!(middle.quantum_inputs(), middle.quantum_outputs());
        assert_eq!(middle.quantum_inputs().len(), 1);
    }

    #[test]
    fn ghz_fixture_round_trips_through_json() {
        let circuit = ghz_circuit();
        let json = circuit_to_json(&circuit);
        let back = circuit_from_json(&json).unwrap();
        assert_eq!(circuit, back);
    }

    #[test]
    fn json_parse_failures_are_reported() {
        assert!(matches!(
            circuit_from_json("{\"num_qubits\": 2"),
            Err(Error::Json(_))
        ));
        // Non-unitary matrix names the gate.
        let bad = r#"{"num_qubits": 1, "gates": [
            {"targets": [0], "matrix": [[[1.0, 0.0], [0.0, 0.0]], [[0.0, 0.0], [2.0, 0.0]]]}
        ]}"#;
        match circuit_from_json(bad) {
            Err(Error::InvalidGate { index: 0, .. }) => {}
            other => panic!("expected InvalidGate for gate 0, got {other:?}"),
        }
        // Target out of range.
        let oob = r#"{"num_qubits": 1, "gates": [
            {"targets": [1], "matrix": [[[1.0, 0.0], [0.0, 0.0]], [[0.0, 0.0], [1.0, 0.0]]]}
        ]}"#;
        assert!(circuit_from_json(oob).is_err());
    }

    #[test]
    fn cuts_round_trip_through_json() {
        let cuts = ghz_cut();
        assert_eq!(cuts_from_json(&cuts_to_json(&cuts)).unwrap(), cuts);
    }
}
