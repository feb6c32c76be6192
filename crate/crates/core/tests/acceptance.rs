//! Acceptance gate: one test per shipping criterion. Each test prints a
//! single `[PASS]`/`[FAIL]` line (visible with `--nocapture` or on failure)
//! and then asserts, so `cargo test --test acceptance` doubles as a
//! checklist.
//!
//! Criteria 3, 4, 5, 6, 10 and 11 share one benchmark sweep (grid of qubit
//! counts, fragment counts and shot budgets, 20 instances per cell, all
//! three methods), executed twice to check determinism. The fixture is
//! built once per process behind a `OnceLock`.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::OnceLock;
use std::time::Instant;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qcut_core::circuit::{build_clustered_ruc, cut_circuit, CutPoint, Fragment, FragmentGraph};
use qcut_core::direct::{
    complete_preparation_conditions, direct_tensor, direct_tensor_exact, tabulate_conditions_exact,
};
use qcut_core::fragsim::{
    exact_full_distribution, exact_variant_distribution, sample_outcome_counts, sample_variant,
    VariantKey,
};
use qcut_core::harness::{read_records, run_sweep, ResultRecord};
use qcut_core::metrics::{
    full_infidelity_estimate, instance_stats, least_squares_slope, multinomial_covariance,
};
use qcut_core::mlft::{mlft_tensor, mlft_tensor_exact, project_maximum_likelihood, ChoiBlocks};
use qcut_core::recombine::{clip_and_normalize, contract, FragmentTensor};
use qcut_core::{Circuit, Gate, Method, ProbDist, SweepConfig, VariantCounts};

fn report(criterion: usize, pass: bool, details: &str) {
    let tag = if pass { "[PASS]" } else { "[FAIL]" };
    println!("{tag} criterion {criterion}: {details}");
}

// ---------------------------------------------------------------------------
// Shared helpers

fn c64(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn reconstruct_exact(graph: &FragmentGraph, mlft: bool) -> ProbDist {
    let tensors: Vec<FragmentTensor> = (0..graph.fragments().len())
        .map(|f| {
            let frag = &graph.fragments()[f];
            let axes = graph.fragment_axes(f);
            if mlft {
                mlft_tensor_exact(frag, axes).unwrap()
            } else {
                direct_tensor_exact(frag, axes).unwrap()
            }
        })
        .collect();
    let raw = contract(graph, &tensors).unwrap();
    clip_and_normalize(&raw).unwrap().0
}

fn reconstruct_sampled(graph: &FragmentGraph, n: u64, mlft: bool, seed: u64) -> ProbDist {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let counts: Vec<Vec<VariantCounts>> = graph
        .fragments()
        .iter()
        .map(|frag| {
            VariantKey::enumerate(frag)
                .into_iter()
                .map(|key| {
                    let dist = exact_variant_distribution(frag, &key).unwrap();
                    sample_variant(&dist, &key, n, &mut rng).unwrap()
                })
                .collect()
        })
        .collect();
    let tensors: Vec<FragmentTensor> = (0..graph.fragments().len())
        .map(|f| {
            let frag = &graph.fragments()[f];
            let axes = graph.fragment_axes(f);
            if mlft {
                mlft_tensor(frag, &counts[f], axes).unwrap()
            } else {
                direct_tensor(frag, &counts[f], axes).unwrap()
            }
        })
        .collect();
    let raw = contract(graph, &tensors).unwrap();
    clip_and_normalize(&raw).unwrap().0
}

fn ghz_graph() -> (Circuit, FragmentGraph) {
    let h = DMatrix::from_row_slice(
        2,
        2,
        &[
            c64(1.0, 0.0),
            c64(1.0, 0.0),
            c64(1.0, 0.0),
            c64(-1.0, 0.0),
        ],
    ) / Complex64::from(2.0f64.sqrt());
    let mut cnot = DMatrix::from_element(4, 4, c64(0.0, 0.0));
    cnot[(0, 0)] = c64(1.0, 0.0);
    cnot[(1, 1)] = c64(1.0, 0.0);
    cnot[(2, 3)] = c64(1.0, 0.0);
    cnot[(3, 2)] = c64(1.0, 0.0);
    let circuit = Circuit::with_gates(
        3,
        vec![
            Gate::new(h, vec![0]).unwrap(),
            Gate::new(cnot.clone(), vec![0, 1]).unwrap(),
            Gate::new(cnot, vec![1, 2]).unwrap(),
        ],
    )
    .unwrap();
    let graph = cut_circuit(&circuit, &[CutPoint { wire: 1, position: 1 }]).unwrap();
    (circuit, graph)
}

// ---------------------------------------------------------------------------
// Shared sweep fixture (criteria 3, 4, 5, 6, 10, 11)

struct SweepFixture {
    records: Vec<ResultRecord>,
    first_column: String,
    second_column: String,
}

const SWEEP_QUBITS: [usize; 4] = [8, 10, 12, 14];
const DOMINANCE_QUBITS: [usize; 3] = [8, 10, 12];
const SWEEP_FRAGMENTS: [usize; 2] = [2, 3];
const SWEEP_SHOTS: [u64; 3] = [10_000, 100_000, 1_000_000];
const SWEEP_INSTANCES: usize = 20;

fn infidelity_column(path: &Path) -> String {
    let text = std::fs::read_to_string(path).unwrap();
    text.lines()
        .skip(1)
        .map(|line| line.split(',').nth(9).unwrap())
        .collect::<Vec<_>>()
        .join("\n")
}

fn sweep() -> &'static SweepFixture {
    static SWEEP: OnceLock<SweepFixture> = OnceLock::new();
    SWEEP.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let config = SweepConfig {
            qubits: SWEEP_QUBITS.to_vec(),
            fragments: SWEEP_FRAGMENTS.to_vec(),
            shots: SWEEP_SHOTS.to_vec(),
            methods: vec![Method::Full, Method::Direct, Method::Mlft],
            instances: SWEEP_INSTANCES,
            master_seed: 0x05EED,
            statevector_limit: None,
        };
        let first = dir.path().join("sweep_a.csv");
        let second = dir.path().join("sweep_b.csv");
        run_sweep(&config, &first).unwrap();
        run_sweep(&config, &second).unwrap();
        SweepFixture {
            records: read_records(&first).unwrap(),
            first_column: infidelity_column(&first),
            second_column: infidelity_column(&second),
        }
    })
}

fn cell_stats(method: Method, q: usize, f: usize, s: u64) -> (f64, f64) {
    let values: Vec<f64> = sweep()
        .records
        .iter()
        .filter(|r| r.method == method && r.qubits == q && r.fragments == f && r.shots == s)
        .map(|r| r.infidelity)
        .collect();
    assert_eq!(values.len(), SWEEP_INSTANCES, "missing rows for a cell");
    instance_stats(&values)
}

fn cell_mean(method: Method, q: usize, f: usize, s: u64) -> f64 {
    cell_stats(method, q, f, s).0
}

// ---------------------------------------------------------------------------
// Criteria

#[test]
fn criterion_01_exact_limit_reconstruction() {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for i in 0..20 {
        let q = [6, 9, 12][i % 3];
        let f = [2, 3][i % 2];
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + i as u64);
        let (circuit, cuts) = build_clustered_ruc(q, f, &mut rng).unwrap();
        let graph = cut_circuit(&circuit, &cuts).unwrap();
        let exact = exact_full_distribution(&circuit).unwrap();
        for mlft in [false, true] {
            worst = worst.max(exact.total_variation(&reconstruct_exact(&graph, mlft)));
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    let pass = worst <= 1e-9 && elapsed < 120.0;
    report(
        1,
        pass,
        &format!(
            "exact-limit reconstruction on 20 circuits, worst TV {worst:.2e} (limit 1e-9), \
             {elapsed:.1}s"
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_02_ghz_fixture() {
    let (_, graph) = ghz_graph();
    let mut ideal = ProbDist::new(3);
    ideal.set(0b000, 0.5);
    ideal.set(0b111, 0.5);

    let mut worst_exact: f64 = 0.0;
    let mut worst_sampled: f64 = 0.0;
    for mlft in [false, true] {
        worst_exact = worst_exact.max(ideal.total_variation(&reconstruct_exact(&graph, mlft)));
        // S = 1e5 split evenly across the 7 tomography variants.
        let sampled = reconstruct_sampled(&graph, 100_000 / 7, mlft, 2);
        worst_sampled = worst_sampled.max(ideal.total_variation(&sampled));
    }
    let pass = worst_exact <= 1e-12 && worst_sampled <= 0.01;
    report(
        2,
        pass,
        &format!(
            "GHZ cut: exact-limit TV {worst_exact:.2e} (limit 1e-12), sampled TV \
             {worst_sampled:.4} at 1e5 shots (limit 0.01)"
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_03_mlft_dominance() {
    let mut cells = 0usize;
    let mut dominated = 0usize;
    let mut worst_ratio: f64 = 0.0;
    for q in DOMINANCE_QUBITS {
        for f in SWEEP_FRAGMENTS {
            for s in SWEEP_SHOTS {
                let direct = cell_mean(Method::Direct, q, f, s);
                let mlft = cell_mean(Method::Mlft, q, f, s);
                cells += 1;
                if mlft <= direct {
                    dominated += 1;
                }
                worst_ratio = worst_ratio.max(mlft / direct);
            }
        }
    }
    let fraction = dominated as f64 / cells as f64;
    let pass = fraction >= 0.95 && worst_ratio <= 1.05;
    report(
        3,
        pass,
        &format!(
            "maximum-likelihood estimator at or below direct in {dominated}/{cells} cells \
             (need >= 95%), worst mean ratio {worst_ratio:.3} (limit 1.05)"
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_04_full_method_tracks_estimate() {
    let mut worst_wide: f64 = 1.0;
    let mut worst_tight: f64 = 1.0;
    for q in DOMINANCE_QUBITS {
        for f in SWEEP_FRAGMENTS {
            for s in [100_000u64, 1_000_000] {
                let mean = cell_mean(Method::Full, q, f, s);
                let predicted = full_infidelity_estimate(q, s);
                let ratio = mean / predicted;
                let deviation = ratio.max(1.0 / ratio);
                worst_wide = worst_wide.max(deviation);
                if 4 * s > 10 * (1u64 << q) {
                    worst_tight = worst_tight.max(deviation);
                }
            }
        }
    }
    let pass = worst_wide <= 4.0 && worst_tight <= 1.5;
    report(
        4,
        pass,
        &format!(
            "uncut sampling vs (2^Q-1)/(4S): worst factor {worst_wide:.2} (limit 4), \
             worst factor {worst_tight:.2} in the well-sampled regime (limit 1.5)"
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_05_one_over_s_scaling() {
    let mut details = String::new();
    let mut pass = true;
    for method in Method::ALL {
        let points: Vec<(f64, f64)> = SWEEP_SHOTS
            .iter()
            .map(|&s| ((s as f64).ln(), cell_mean(method, 10, 2, s).ln()))
            .collect();
        let slope = least_squares_slope(&points);
        pass &= (slope + 1.0).abs() <= 0.2;
        details.push_str(&format!("{method} {slope:.3}, "));
    }
    report(
        5,
        pass,
        &format!("log-infidelity vs log-shots slopes at Q=10 F=2: {details}target -1 +/- 0.2"),
    );
    assert!(pass);
}

#[test]
fn criterion_06_size_scaling() {
    let mut details = String::new();
    let mut pass = true;
    let s = 1_000_000u64;
    for f in SWEEP_FRAGMENTS {
        for method in Method::ALL {
            let points: Vec<(f64, f64)> = SWEEP_QUBITS
                .iter()
                .map(|&q| (q as f64, cell_mean(method, q, f, s).log2()))
                .collect();
            let slope = least_squares_slope(&points);
            let target = match method {
                Method::Full => 1.0,
                Method::Direct | Method::Mlft => 1.0 / f as f64,
            };
            pass &= (slope - target).abs() <= 0.25;
            details.push_str(&format!("{method}/F={f} {slope:.2} (target {target:.2}), "));
        }
    }
    report(
        6,
        pass,
        &format!("log2-infidelity vs qubit-count slopes at S=1e6: {details}band +/- 0.25"),
    );
    assert!(pass);
}

/// Independent sort-and-threshold Euclidean projection onto the probability
/// simplex.
fn simplex_projection(values: &[f64]) -> Vec<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut prefix = 0.0;
    let mut theta = (sorted[0] - 1.0).min(0.0);
    for (i, &v) in sorted.iter().enumerate() {
        prefix += v;
        let candidate = (prefix - 1.0) / (i + 1) as f64;
        if v - candidate > 0.0 {
            theta = candidate;
        }
    }
    values.iter().map(|&v| (v - theta).max(0.0)).collect()
}

fn pooled_spectrum(blocks: &ChoiBlocks) -> Vec<f64> {
    let mut pool: Vec<f64> = blocks
        .blocks()
        .values()
        .flat_map(|block| {
            block
                .clone()
                .symmetric_eigen()
                .eigenvalues
                .iter()
                .copied()
                .collect::<Vec<f64>>()
        })
        .collect();
    pool.sort_by(|a, b| b.total_cmp(a));
    pool
}

#[test]
fn criterion_07_projection_matches_simplex_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst_gap: f64 = 0.0;
    let mut worst_eig: f64 = 0.0;
    let mut worst_trace: f64 = 0.0;
    for _ in 0..1000 {
        let width = rng.gen_range(1..=4usize);
        let d = 1usize << width;
        let c_out = 3usize;
        let count = rng.gen_range(1..=8usize);
        // Random subset of classical outcomes, then random Hermitian blocks
        // shifted so the total trace is exactly 1.
        let mut keys: Vec<u64> = (0..8).collect();
        for i in (1..keys.len()).rev() {
            keys.swap(i, rng.gen_range(0..=i));
        }
        keys.truncate(count);
        let mut blocks = BTreeMap::new();
        for &s in &keys {
            let mut m = DMatrix::from_fn(d, d, |_, _| {
                c64(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
            });
            m = (m.clone() + m.adjoint()) / Complex64::from(2.0);
            blocks.insert(s, m);
        }
        let trace: f64 = blocks.values().map(|b| b.trace().re).sum();
        let shift = (1.0 - trace) / (count * d) as f64;
        for block in blocks.values_mut() {
            for i in 0..d {
                block[(i, i)] += Complex64::from(shift);
            }
        }
        let ansatz = ChoiBlocks::new(width, 0, c_out, blocks).unwrap();

        let expected = {
            let mut v = simplex_projection(&pooled_spectrum(&ansatz));
            v.sort_by(|a, b| b.total_cmp(a));
            v
        };
        let projected = project_maximum_likelihood(&ansatz).unwrap();
        let actual = pooled_spectrum(&projected);
        for (a, e) in actual.iter().zip(&expected) {
            worst_gap = worst_gap.max((a - e).abs());
            worst_eig = worst_eig.max(-a);
        }
        worst_trace = worst_trace.max((projected.total_trace() - 1.0).abs());
    }
    let pass = worst_gap <= 1e-10 && worst_eig <= 1e-10 && worst_trace <= 1e-10;
    report(
        7,
        pass,
        &format!(
            "1000 random block sets: worst spectrum gap to simplex oracle {worst_gap:.2e}, \
             most negative output eigenvalue {worst_eig:.2e}, worst trace error \
             {worst_trace:.2e} (limits 1e-10)"
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_08_sampler_covariance() {
    let probs = [0.5, 0.3, 0.2];
    let n = 1000u64;
    let reps = 10_000usize;
    let mut dist = ProbDist::new(2);
    for (b, &p) in probs.iter().enumerate() {
        dist.set(b as u64, p);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    // errors[r][b] = empirical frequency minus truth on repetition r.
    let mut errors = vec![[0.0f64; 3]; reps];
    for row in errors.iter_mut() {
        let counts = sample_outcome_counts(&dist, n, &mut rng).unwrap();
        for (b, &p) in probs.iter().enumerate() {
            let c = counts.get(&(b as u64)).copied().unwrap_or(0);
            row[b] = c as f64 / n as f64 - p;
        }
    }
    let expected = multinomial_covariance(&probs, n);
    let mut worst_sigma: f64 = 0.0;
    for b in 0..3 {
        for c in 0..3 {
            let products: Vec<f64> = errors.iter().map(|e| e[b] * e[c]).collect();
            let (mean, std) = instance_stats(&products);
            let standard_error = std / (reps as f64).sqrt();
            worst_sigma = worst_sigma.max((mean - expected[b][c]).abs() / standard_error);
        }
    }
    let pass = worst_sigma <= 5.0;
    report(
        8,
        pass,
        &format!(
            "multinomial error covariance, 1e4 repetitions: worst entry deviation \
             {worst_sigma:.2} standard errors (limit 5)"
        ),
    );
    assert!(pass);
}

/// True minus-eigenstate conditionals, obtained independently by prepending
/// a Z gate on the severed input wire: Z maps the X+ and Y+ preparations to
/// X- and Y- while fixing the Z basis states.
fn z_prepended(fragment: &Fragment, wire: usize) -> Fragment {
    let z = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
        c64(1.0, 0.0),
        c64(-1.0, 0.0),
    ]));
    let mut gates = vec![Gate::new(z, vec![wire]).unwrap()];
    gates.extend(fragment.subcircuit().gates().iter().cloned());
    let circuit = Circuit::with_gates(fragment.num_qubits(), gates).unwrap();
    Fragment::new(
        circuit,
        fragment.quantum_inputs().to_vec(),
        fragment.quantum_outputs().to_vec(),
    )
    .unwrap()
}

#[test]
fn criterion_09_preparation_completion_identity() {
    let mut worst: f64 = 0.0;
    let mut checked = 0usize;
    let mut fragments_seen = 0usize;
    let mut i = 0u64;
    while fragments_seen < 20 {
        let q = [5, 6, 7, 8][(i % 4) as usize];
        let f = [2, 3][(i % 2) as usize];
        let mut rng = ChaCha8Rng::seed_from_u64(9000 + i);
        i += 1;
        let (circuit, cuts) = build_clustered_ruc(q, f, &mut rng).unwrap();
        let graph = cut_circuit(&circuit, &cuts).unwrap();
        for fragment in graph.fragments() {
            if fragment.quantum_inputs().is_empty() || fragments_seen >= 20 {
                continue;
            }
            fragments_seen += 1;
            let mut table = tabulate_conditions_exact(fragment).unwrap();
            complete_preparation_conditions(&mut table).unwrap();
            let wire = fragment.quantum_inputs()[0];
            let truth = tabulate_conditions_exact(&z_prepended(fragment, wire)).unwrap();
            let meas_cells = 6usize.pow(table.meas_axes() as u32);
            // Condition digits 0..6 stand for X+ X- Y+ Y- Z+ Z-; a prepended
            // Z turns the prepared X+/Y+ cells into the true X-/Y- ones.
            for (minus, plus) in [(1usize, 0usize), (3, 2)] {
                for m in 0..meas_cells {
                    let mut digits = vec![minus];
                    let mut rest = m;
                    for _ in 0..table.meas_axes() {
                        digits.push(rest % 6);
                        rest /= 6;
                    }
                    let mut truth_digits = digits.clone();
                    truth_digits[0] = plus;
                    let completed = table.cell(&digits).unwrap();
                    let reference = truth.cell(&truth_digits).unwrap();
                    let keys: std::collections::BTreeSet<u64> = completed
                        .keys()
                        .chain(reference.keys())
                        .copied()
                        .collect();
                    for key in keys {
                        let a = completed.get(&key).copied().unwrap_or(0.0);
                        let b = reference.get(&key).copied().unwrap_or(0.0);
                        worst = worst.max((a - b).abs());
                        checked += 1;
                    }
                }
            }
        }
    }
    let pass = worst <= 1e-12 && fragments_seen == 20;
    report(
        9,
        pass,
        &format!(
            "completed minus-eigenstate conditionals vs Z-prepended truth on 20 fragments: \
             worst entry gap {worst:.2e} over {checked} entries (limit 1e-12)"
        ),
    );
    assert!(pass);
}

/// Known to fail at this scale: at eight qubits the direct estimator has a
/// heavy-tailed instance distribution — rare circuits leave persistent
/// negative mass in the stitched quasi-distribution, and the clipping error
/// decays slower than 1/S, producing ~6x infidelity outliers (population
/// sigma/mean up to ~0.74 at 100 instances). The same counts fed to the
/// maximum-likelihood estimator clip nothing and stay in the pack. The bound
/// is kept strict rather than widened to mask that behavior.
#[test]
fn criterion_10_instance_spread() {
    let mut worst: f64 = 0.0;
    for method in Method::ALL {
        for q in DOMINANCE_QUBITS {
            for f in SWEEP_FRAGMENTS {
                for s in SWEEP_SHOTS {
                    let (mean, std) = cell_stats(method, q, f, s);
                    worst = worst.max(std / mean);
                }
            }
        }
    }
    let pass = worst < 0.5;
    report(
        10,
        pass,
        &format!(
            "relative instance spread sigma/mean across all cells: worst {worst:.3} (limit 0.5)"
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_11_sweep_determinism() {
    let fixture = sweep();
    let pass = !fixture.first_column.is_empty() && fixture.first_column == fixture.second_column;
    report(
        11,
        pass,
        &format!(
            "two sweeps with one master seed: infidelity columns byte-identical over {} rows",
            fixture.first_column.lines().count()
        ),
    );
    assert!(pass);
}
