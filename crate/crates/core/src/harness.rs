//! Benchmark harness: deterministic seeding, single runs, sweeps, reports.
//!
//! Every random stream is derived from one master seed through a keyed
//! mixing chain, so any cell of a sweep can be reproduced in isolation and
//! a rerun of the whole sweep is bit-identical. Tomography streams are
//! keyed by circuit coordinates, shot budget, fragment and variant, but not
//! by estimation method: the direct and model-fitted estimators consume the
//! same counts, which isolates the estimator as the only difference between
//! their rows.
//!
//! Sweep output is a flat CSV, written strictly in canonical row order
//! (qubits, fragments, instance groups; shots and method within a group).
//! An interrupted sweep leaves a canonical prefix, and rerunning it skips
//! rows already on disk.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{File, OpenOptions};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuit::{build_clustered_ruc, cut_circuit, Circuit, CutPoint, FragmentGraph};
use crate::direct::direct_tensor;
use crate::dist::ProbDist;
use crate::fragsim::{
    exact_full_distribution_with_limit, exact_variant_distribution_with_limit,
    sample_outcome_counts, sample_variant, VariantCounts, VariantDistribution, VariantKey,
    DEFAULT_STATEVECTOR_LIMIT,
};
use crate::metrics::{
    cut_infidelity_estimate, fidelity, full_infidelity_estimate, instance_stats,
    least_squares_slope,
};
use crate::mlft::mlft_tensor;
use crate::recombine::{clip_and_normalize, contract, FragmentTensor};
use crate::{Error, Result};

// Domain tags keep unrelated streams apart even when their other key words
// coincide.
const TAG_CIRCUIT: u64 = 0x4349_5243;
const TAG_VARIANT: u64 = 0x544F_4D4F;
const TAG_FULL: u64 = 0x4655_4C4C;

/// 64-bit finalizer with full avalanche; the standard splitmix step.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Absorbs key words into the master seed one mixing step at a time. Order
/// matters, so `[a, b]` and `[b, a]` give unrelated streams.
pub fn derive_seed(master: u64, words: &[u64]) -> u64 {
    let mut state = mix(master);
    for &w in words {
        state = mix(state ^ w);
    }
    state
}

/// Seed of the circuit-construction stream for one instance.
pub fn circuit_seed(master: u64, qubits: usize, fragments: usize, instance: usize) -> u64 {
    derive_seed(
        master,
        &[TAG_CIRCUIT, qubits as u64, fragments as u64, instance as u64],
    )
}

fn variant_stream_seed(
    master: u64,
    qubits: usize,
    fragments: usize,
    instance: usize,
    shots: u64,
    fragment: usize,
    variant: usize,
) -> u64 {
    derive_seed(
        master,
        &[
            TAG_VARIANT,
            qubits as u64,
            fragments as u64,
            instance as u64,
            shots,
            fragment as u64,
            variant as u64,
        ],
    )
}

fn full_stream_seed(
    master: u64,
    qubits: usize,
    fragments: usize,
    instance: usize,
    shots: u64,
) -> u64 {
    derive_seed(
        master,
        &[
            TAG_FULL,
            qubits as u64,
            fragments as u64,
            instance as u64,
            shots,
        ],
    )
}

/// FNV-1a over little-endian words; fingerprints sampled counts so two rows
/// that consumed identical data can be recognized from the CSV alone.
struct Fnv64(u64);

impl Fnv64 {
    fn new() -> Self {
        Fnv64(0xcbf2_9ce4_8422_2325)
    }

    fn absorb(&mut self, word: u64) {
        for byte in word.to_le_bytes() {
            self.0 ^= byte as u64;
            self.0 = self.0.wrapping_mul(0x100_0000_01b3);
        }
    }

    fn finish(self) -> u64 {
        self.0
    }
}

/// Estimation strategies benchmarked against each other.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Sample the uncut circuit.
    Full,
    /// Cut, estimate tensors by averaging frequencies.
    Direct,
    /// Cut, estimate tensors through the fitted physical model.
    Mlft,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Full, Method::Direct, Method::Mlft];

    pub fn name(self) -> &'static str {
        match self {
            Method::Full => "full",
            Method::Direct => "direct",
            Method::Mlft => "mlft",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Method::Full),
            "direct" => Ok(Method::Direct),
            "mlft" => Ok(Method::Mlft),
            other => Err(Error::InvalidArgument(format!(
                "unknown method {other:?}; expected full, direct or mlft"
            ))),
        }
    }
}

/// Coordinates of one benchmark run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellSpec {
    pub master_seed: u64,
    pub qubits: usize,
    pub fragments: usize,
    pub instance: usize,
    pub shots: u64,
    pub method: Method,
    pub statevector_limit: usize,
}

impl CellSpec {
    pub fn new(
        master_seed: u64,
        qubits: usize,
        fragments: usize,
        instance: usize,
        shots: u64,
        method: Method,
    ) -> Self {
        CellSpec {
            master_seed,
            qubits,
            fragments,
            instance,
            shots,
            method,
            statevector_limit: DEFAULT_STATEVECTOR_LIMIT,
        }
    }
}

/// One CSV row of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub method: Method,
    #[serde(rename = "Q")]
    pub qubits: usize,
    #[serde(rename = "F")]
    pub fragments: usize,
    #[serde(rename = "S")]
    pub shots: u64,
    /// Shots per tomography variant (the full budget for uncut runs).
    pub n: u64,
    /// Number of distinct sampled settings.
    #[serde(rename = "V")]
    pub variants: u64,
    /// Cuts severed from the circuit.
    #[serde(rename = "K")]
    pub cuts: usize,
    pub instance: usize,
    /// Master seed; every stream of the row derives from it.
    pub seed: u64,
    pub infidelity: f64,
    pub clipped_mass: f64,
    pub wall_time_s: f64,
    pub counts_checksum: u64,
}

/// Precomputed per-instance state shared by every row of a cell group: the
/// exact circuit distribution and the exact per-variant distributions the
/// samplers draw from.
struct PreparedCell {
    graph: FragmentGraph,
    exact: ProbDist,
    variant_dists: Vec<Vec<(VariantKey, VariantDistribution)>>,
}

/// Builds the circuit and cut set for one benchmark instance. Every consumer
/// (single-cell runs, sweeps, the CLI's circuit export) goes through this
/// function, so a given (master_seed, Q, F, instance) always names the same
/// circuit regardless of which path asks for it.
pub fn instance_circuit(
    master_seed: u64,
    qubits: usize,
    fragments: usize,
    instance: usize,
) -> Result<(Circuit, Vec<CutPoint>)> {
    let mut rng =
        ChaCha8Rng::seed_from_u64(circuit_seed(master_seed, qubits, fragments, instance));
    build_clustered_ruc(qubits, fragments, &mut rng)
}

fn prepare_cell(
    master_seed: u64,
    qubits: usize,
    fragments: usize,
    instance: usize,
    limit: usize,
) -> Result<PreparedCell> {
    // Checked before construction: cluster unitaries of a two-fragment
    // circuit are as large as the full statevector, so an oversized request
    // must be rejected before any gate matrix is allocated.
    if qubits > limit {
        return Err(Error::StatevectorLimit { qubits, limit });
    }
    let (circuit, cuts) = instance_circuit(master_seed, qubits, fragments, instance)?;
    let exact = exact_full_distribution_with_limit(&circuit, limit)?;
    let graph = cut_circuit(&circuit, &cuts)?;
    let variant_dists = graph
        .fragments()
        .iter()
        .map(|frag| {
            VariantKey::enumerate(frag)
                .into_iter()
                .map(|key| {
                    let dist = exact_variant_distribution_with_limit(frag, &key, limit)?;
                    Ok((key, dist))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PreparedCell {
        graph,
        exact,
        variant_dists,
    })
}

fn run_prepared(cell: &PreparedCell, spec: &CellSpec) -> Result<ResultRecord> {
    let start = Instant::now();
    let (n, variants, infidelity, clipped_mass, checksum) = match spec.method {
        Method::Full => {
            let mut rng = ChaCha8Rng::seed_from_u64(full_stream_seed(
                spec.master_seed,
                spec.qubits,
                spec.fragments,
                spec.instance,
                spec.shots,
            ));
            let counts = sample_outcome_counts(&cell.exact, spec.shots, &mut rng)?;
            let mut sum = Fnv64::new();
            sum.absorb(spec.shots);
            let mut dist = ProbDist::new(cell.exact.num_bits());
            for (&bits, &count) in &counts {
                sum.absorb(bits);
                sum.absorb(count);
                dist.set(bits, count as f64 / spec.shots as f64);
            }
            let infidelity = 1.0 - fidelity(&cell.exact, &dist);
            (spec.shots, 1, infidelity, 0.0, sum.finish())
        }
        Method::Direct | Method::Mlft => {
            let variants = cell.graph.total_variants();
            let n = spec.shots / variants;
            if n == 0 {
                return Err(Error::InsufficientBudget {
                    shots: spec.shots,
                    variants,
                });
            }
            let leftover = spec.shots - n * variants;
            if leftover > 0 {
                log::debug!(
                    "budget {} over {} variants: {} shots per variant, {} discarded",
                    spec.shots,
                    variants,
                    n,
                    leftover
                );
            }
            let mut sum = Fnv64::new();
            let mut all_counts: Vec<Vec<VariantCounts>> =
                Vec::with_capacity(cell.variant_dists.len());
            for (fi, dists) in cell.variant_dists.iter().enumerate() {
                let mut frag_counts = Vec::with_capacity(dists.len());
                for (vi, (key, dist)) in dists.iter().enumerate() {
                    let mut rng = ChaCha8Rng::seed_from_u64(variant_stream_seed(
                        spec.master_seed,
                        spec.qubits,
                        spec.fragments,
                        spec.instance,
                        spec.shots,
                        fi,
                        vi,
                    ));
                    let counts = sample_variant(dist, key, n, &mut rng)?;
                    sum.absorb(fi as u64);
                    sum.absorb(vi as u64);
                    sum.absorb(n);
                    for (&(r, s), &c) in counts.counts() {
                        sum.absorb(r as u64);
                        sum.absorb(s);
                        sum.absorb(c);
                    }
                    frag_counts.push(counts);
                }
                all_counts.push(frag_counts);
            }
            let tensors: Vec<FragmentTensor> = cell
                .graph
                .fragments()
                .iter()
                .enumerate()
                .map(|(fi, frag)| {
                    let axes = cell.graph.fragment_axes(fi);
                    match spec.method {
                        Method::Direct => direct_tensor(frag, &all_counts[fi], axes),
                        Method::Mlft => mlft_tensor(frag, &all_counts[fi], axes),
                        Method::Full => unreachable!(),
                    }
                })
                .collect::<Result<_>>()?;
            let raw = contract(&cell.graph, &tensors)?;
            let (dist, clip) = clip_and_normalize(&raw)?;
            let infidelity = 1.0 - fidelity(&cell.exact, &dist);
            (n, variants, infidelity, clip.clipped_mass, sum.finish())
        }
    };
    Ok(ResultRecord {
        method: spec.method,
        qubits: spec.qubits,
        fragments: spec.fragments,
        shots: spec.shots,
        n,
        variants,
        cuts: spec.fragments - 1,
        instance: spec.instance,
        seed: spec.master_seed,
        infidelity,
        clipped_mass,
        wall_time_s: start.elapsed().as_secs_f64(),
        counts_checksum: checksum,
    })
}

/// Runs one benchmark cell from scratch. Within a sweep the same row is
/// produced by shared precomputation, but the derived seeds make both paths
/// identical bit for bit.
pub fn run_cell(spec: &CellSpec) -> Result<ResultRecord> {
    let cell = prepare_cell(
        spec.master_seed,
        spec.qubits,
        spec.fragments,
        spec.instance,
        spec.statevector_limit,
    )?;
    run_prepared(&cell, spec)
}

/// Grid of benchmark cells, expanded in canonical order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepConfig {
    pub qubits: Vec<usize>,
    pub fragments: Vec<usize>,
    pub shots: Vec<u64>,
    pub methods: Vec<Method>,
    pub instances: usize,
    pub master_seed: u64,
    #[serde(default)]
    pub statevector_limit: Option<usize>,
}

impl SweepConfig {
    pub fn from_json(json: &str) -> Result<Self> {
        let config: SweepConfig = serde_json::from_str(json)?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialize")
    }

    pub fn validate(&self) -> Result<()> {
        if self.qubits.is_empty()
            || self.fragments.is_empty()
            || self.shots.is_empty()
            || self.methods.is_empty()
            || self.instances == 0
        {
            return Err(Error::InvalidArgument(
                "sweep config needs qubits, fragments, shots, methods and instances".into(),
            ));
        }
        Ok(())
    }

    fn limit(&self) -> usize {
        self.statevector_limit.unwrap_or(DEFAULT_STATEVECTOR_LIMIT)
    }

    /// Rows in canonical order: instance groups outermost (qubits, then
    /// fragments, then instance), shots and method within a group.
    pub fn row_specs(&self) -> Vec<CellSpec> {
        let mut specs = Vec::new();
        for &q in &self.qubits {
            for &f in &self.fragments {
                for instance in 0..self.instances {
                    for &s in &self.shots {
                        for &method in &self.methods {
                            specs.push(CellSpec {
                                master_seed: self.master_seed,
                                qubits: q,
                                fragments: f,
                                instance,
                                shots: s,
                                method,
                                statevector_limit: self.limit(),
                            });
                        }
                    }
                }
            }
        }
        specs
    }
}

/// What a sweep call did: rows newly computed and rows already on disk.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SweepOutcome {
    pub written: usize,
    pub skipped: usize,
}

fn spec_matches(record: &ResultRecord, spec: &CellSpec) -> bool {
    record.method == spec.method
        && record.qubits == spec.qubits
        && record.fragments == spec.fragments
        && record.shots == spec.shots
        && record.instance == spec.instance
        && record.seed == spec.master_seed
}

/// Reads a sweep CSV back into records.
pub fn read_records(path: &Path) -> Result<Vec<ResultRecord>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut records = Vec::new();
    for row in reader.deserialize() {
        records.push(row?);
    }
    Ok(records)
}

/// Runs a sweep, appending to `out_path`. Existing rows must form a
/// canonical prefix of this sweep's row order; they are kept and skipped.
/// Rows are flushed group by group, so interruption never leaves anything
/// but a shorter canonical prefix.
pub fn run_sweep(config: &SweepConfig, out_path: &Path) -> Result<SweepOutcome> {
    config.validate()?;
    let specs = config.row_specs();
    let existing = match std::fs::metadata(out_path) {
        Ok(meta) if meta.len() > 0 => read_records(out_path)?,
        _ => Vec::new(),
    };
    if existing.len() > specs.len() {
        return Err(Error::InvalidArgument(format!(
            "existing output has {} rows, sweep only defines {}",
            existing.len(),
            specs.len()
        )));
    }
    for (i, record) in existing.iter().enumerate() {
        if !spec_matches(record, &specs[i]) {
            return Err(Error::InvalidArgument(format!(
                "existing output row {i} does not match this sweep's canonical order; \
                 refusing to append"
            )));
        }
    }
    let skip = existing.len();

    let mut writer = if skip == 0 {
        csv::Writer::from_writer(File::create(out_path)?)
    } else {
        csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(OpenOptions::new().append(true).open(out_path)?)
    };

    let group_rows = config.shots.len() * config.methods.len();
    let total_groups = config.qubits.len() * config.fragments.len() * config.instances;
    let mut group_no = 0usize;
    let mut written = 0usize;
    let mut index = 0usize;
    for &q in &config.qubits {
        for &f in &config.fragments {
            for instance in 0..config.instances {
                group_no += 1;
                let start = index;
                index += group_rows;
                if index <= skip {
                    continue;
                }
                let group_start = Instant::now();
                let cell =
                    prepare_cell(config.master_seed, q, f, instance, config.limit())?;
                let todo = &specs[start.max(skip)..index];
                let records: Vec<ResultRecord> = todo
                    .par_iter()
                    .map(|spec| run_prepared(&cell, spec))
                    .collect::<Result<_>>()?;
                for record in records {
                    writer.serialize(record)?;
                    written += 1;
                }
                writer.flush()?;
                log::info!(
                    "[{group_no}/{total_groups}] Q={q} F={f} instance={instance}: \
                     {} rows in {:.2}s",
                    todo.len(),
                    group_start.elapsed().as_secs_f64()
                );
            }
        }
    }
    Ok(SweepOutcome {
        written,
        skipped: skip,
    })
}

/// Aggregate of one `(method, Q, F, S)` cell across instances.
#[derive(Debug, Clone, Serialize)]
pub struct CellSummary {
    pub method: Method,
    #[serde(rename = "Q")]
    pub qubits: usize,
    #[serde(rename = "F")]
    pub fragments: usize,
    #[serde(rename = "S")]
    pub shots: u64,
    pub instances: usize,
    pub n: u64,
    pub mean_infidelity: f64,
    pub std_infidelity: f64,
    pub mean_clipped_mass: f64,
    /// Shot-noise forecast: variance-based for uncut sampling, outcome-count
    /// based for cut reconstruction.
    pub predicted_infidelity: f64,
    /// Looser companion: the crude support-over-shots ratio for uncut rows,
    /// the contraction blow-up bound for cut rows.
    pub predicted_loose: f64,
}

/// Aggregates records per cell, in (Q, F, S, method) order.
pub fn summarize(records: &[ResultRecord]) -> Result<Vec<CellSummary>> {
    let mut groups: BTreeMap<(usize, usize, u64, Method), Vec<&ResultRecord>> = BTreeMap::new();
    for r in records {
        groups
            .entry((r.qubits, r.fragments, r.shots, r.method))
            .or_default()
            .push(r);
    }
    let mut graph_cache: BTreeMap<(u64, usize, usize), FragmentGraph> = BTreeMap::new();
    let mut summaries = Vec::with_capacity(groups.len());
    for ((q, f, s, method), rows) in groups {
        let infidelities: Vec<f64> = rows.iter().map(|r| r.infidelity).collect();
        let (mean, std) = instance_stats(&infidelities);
        let clipped = rows.iter().map(|r| r.clipped_mass).sum::<f64>() / rows.len() as f64;
        let n = rows[0].n;
        let (predicted, loose) = match method {
            Method::Full => (
                full_infidelity_estimate(q, s),
                (1u64 << q) as f64 / s as f64,
            ),
            Method::Direct | Method::Mlft => {
                let master = rows[0].seed;
                let graph = match graph_cache.entry((master, q, f)) {
                    std::collections::btree_map::Entry::Occupied(e) => e.into_mut(),
                    std::collections::btree_map::Entry::Vacant(e) => {
                        let (circuit, cuts) = instance_circuit(master, q, f, 0)?;
                        e.insert(cut_circuit(&circuit, &cuts)?)
                    }
                };
                let report = cut_infidelity_estimate(graph, n);
                (report.estimate, report.bound)
            }
        };
        summaries.push(CellSummary {
            method,
            qubits: q,
            fragments: f,
            shots: s,
            instances: rows.len(),
            n,
            mean_infidelity: mean,
            std_infidelity: std,
            mean_clipped_mass: clipped,
            predicted_infidelity: predicted,
            predicted_loose: loose,
        });
    }
    Ok(summaries)
}

fn method_color(method: Method) -> &'static str {
    match method {
        Method::Full => "#3366cc",
        Method::Direct => "#cc3333",
        Method::Mlft => "#2d8a43",
    }
}

struct Series {
    label: String,
    color: &'static str,
    points: Vec<(f64, f64)>,
}

/// Minimal self-contained SVG scatter-and-line chart.
fn render_svg(
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[Series],
    log_x: bool,
    log_y: bool,
) -> String {
    let (w, h) = (660.0, 440.0);
    let (left, right, top, bottom) = (78.0, 620.0, 48.0, 380.0);
    let tx = |x: f64| if log_x { x.log10() } else { x };
    let ty = |y: f64| if log_y { y.log10() } else { y };
    let mut xs: Vec<f64> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    for s in series {
        for &(x, y) in &s.points {
            xs.push(tx(x));
            ys.push(ty(y));
        }
    }
    let (x0, x1) = bounds(&xs);
    let (y0, y1) = bounds(&ys);
    let px = |x: f64| left + (tx(x) - x0) / (x1 - x0) * (right - left);
    let py = |y: f64| bottom - (ty(y) - y0) / (y1 - y0) * (bottom - top);

    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {w} {h}\" \
         font-family=\"sans-serif\" font-size=\"12\">\n"
    ));
    out.push_str(&format!(
        "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n"
    ));
    out.push_str(&format!(
        "<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">{}</text>\n",
        (left + right) / 2.0,
        title
    ));
    for (value, label) in axis_ticks(x0, x1, log_x) {
        let x = left + (value - x0) / (x1 - x0) * (right - left);
        out.push_str(&format!(
            "<line x1=\"{x:.1}\" y1=\"{top}\" x2=\"{x:.1}\" y2=\"{bottom}\" \
             stroke=\"#dddddd\"/>\n"
        ));
        out.push_str(&format!(
            "<text x=\"{x:.1}\" y=\"{}\" text-anchor=\"middle\">{label}</text>\n",
            bottom + 18.0
        ));
    }
    for (value, label) in axis_ticks(y0, y1, log_y) {
        let y = bottom - (value - y0) / (y1 - y0) * (bottom - top);
        out.push_str(&format!(
            "<line x1=\"{left}\" y1=\"{y:.1}\" x2=\"{right}\" y2=\"{y:.1}\" \
             stroke=\"#dddddd\"/>\n"
        ));
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{:.1}\" text-anchor=\"end\">{label}</text>\n",
            left - 8.0,
            y + 4.0
        ));
    }
    out.push_str(&format!(
        "<rect x=\"{left}\" y=\"{top}\" width=\"{}\" height=\"{}\" fill=\"none\" \
         stroke=\"#333333\"/>\n",
        right - left,
        bottom - top
    ));
    out.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
        (left + right) / 2.0,
        h - 8.0,
        x_label
    ));
    out.push_str(&format!(
        "<text x=\"16\" y=\"{}\" text-anchor=\"middle\" \
         transform=\"rotate(-90 16 {})\">{}</text>\n",
        (top + bottom) / 2.0,
        (top + bottom) / 2.0,
        y_label
    ));
    for s in series {
        let path: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y)| format!("{:.1},{:.1}", px(x), py(y)))
            .collect();
        out.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.8\"/>\n",
            path.join(" "),
            s.color
        ));
        for &(x, y) in &s.points {
            out.push_str(&format!(
                "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"3\" fill=\"{}\"/>\n",
                px(x),
                py(y),
                s.color
            ));
        }
    }
    for (i, s) in series.iter().enumerate() {
        let y = top + 16.0 + 18.0 * i as f64;
        out.push_str(&format!(
            "<line x1=\"{}\" y1=\"{y:.1}\" x2=\"{}\" y2=\"{y:.1}\" stroke=\"{}\" \
             stroke-width=\"1.8\"/>\n",
            right - 150.0,
            right - 126.0,
            s.color
        ));
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{:.1}\">{}</text>\n",
            right - 120.0,
            y + 4.0,
            s.label
        ));
    }
    out.push_str("</svg>\n");
    out
}

fn bounds(values: &[f64]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = (hi - lo) * 0.06;
    (lo - pad, hi + pad)
}

/// Tick positions in transformed coordinates with display labels.
fn axis_ticks(lo: f64, hi: f64, log: bool) -> Vec<(f64, String)> {
    if log {
        let first = lo.ceil() as i64;
        let last = hi.floor() as i64;
        (first..=last)
            .map(|k| (k as f64, format!("1e{k}")))
            .collect()
    } else {
        let count = 5usize;
        (0..=count)
            .map(|i| {
                let v = lo + (hi - lo) * i as f64 / count as f64;
                (v, format!("{v:.3}"))
            })
            .collect()
    }
}

/// Writes `summary.csv`, scaling plots and `report.md` into `out_dir`.
/// Returns the files created.
pub fn write_report(records: &[ResultRecord], out_dir: &Path) -> Result<Vec<PathBuf>> {
    if records.is_empty() {
        return Err(Error::InvalidArgument("no records to report on".into()));
    }
    std::fs::create_dir_all(out_dir)?;
    let summaries = summarize(records)?;
    let mut files = Vec::new();

    let summary_path = out_dir.join("summary.csv");
    let mut writer = csv::Writer::from_path(&summary_path)?;
    for s in &summaries {
        writer.serialize(s)?;
    }
    writer.flush()?;
    files.push(summary_path);

    let mut cells: BTreeMap<(usize, usize), Vec<&CellSummary>> = BTreeMap::new();
    for s in &summaries {
        cells.entry((s.qubits, s.fragments)).or_default().push(s);
    }

    // Infidelity against shot budget, one chart per circuit shape.
    for (&(q, f), rows) in &cells {
        let shots: std::collections::BTreeSet<u64> = rows.iter().map(|r| r.shots).collect();
        if shots.len() < 2 {
            continue;
        }
        let mut series = Vec::new();
        for method in Method::ALL {
            let points: Vec<(f64, f64)> = rows
                .iter()
                .filter(|r| r.method == method)
                .map(|r| (r.shots as f64, r.mean_infidelity))
                .collect();
            if !points.is_empty() {
                series.push(Series {
                    label: method.name().to_string(),
                    color: method_color(method),
                    points,
                });
            }
        }
        let svg = render_svg(
            &format!("Infidelity vs shots, Q={q} F={f}"),
            "total shots",
            "mean infidelity",
            &series,
            true,
            true,
        );
        let path = out_dir.join(format!("infidelity_vs_shots_q{q}_f{f}.svg"));
        std::fs::write(&path, svg)?;
        files.push(path);
    }

    // Infidelity against width at the largest budget, one chart per F.
    let max_shots = summaries.iter().map(|s| s.shots).max().unwrap();
    let mut by_f: BTreeMap<usize, Vec<&CellSummary>> = BTreeMap::new();
    for s in &summaries {
        if s.shots == max_shots {
            by_f.entry(s.fragments).or_default().push(s);
        }
    }
    for (&f, rows) in &by_f {
        let qs: std::collections::BTreeSet<usize> = rows.iter().map(|r| r.qubits).collect();
        if qs.len() < 2 {
            continue;
        }
        let mut series = Vec::new();
        for method in Method::ALL {
            let points: Vec<(f64, f64)> = rows
                .iter()
                .filter(|r| r.method == method)
                .map(|r| (r.qubits as f64, r.mean_infidelity))
                .collect();
            if !points.is_empty() {
                series.push(Series {
                    label: method.name().to_string(),
                    color: method_color(method),
                    points,
                });
            }
        }
        let svg = render_svg(
            &format!("Infidelity vs width, F={f}, S={max_shots}"),
            "qubits",
            "mean infidelity",
            &series,
            false,
            true,
        );
        let path = out_dir.join(format!("infidelity_vs_qubits_f{f}.svg"));
        std::fs::write(&path, svg)?;
        files.push(path);
    }

    let report_path = out_dir.join("report.md");
    std::fs::write(&report_path, render_markdown(&summaries, &cells, &by_f))?;
    files.push(report_path);
    Ok(files)
}

fn render_markdown(
    summaries: &[CellSummary],
    cells: &BTreeMap<(usize, usize), Vec<&CellSummary>>,
    by_f: &BTreeMap<usize, Vec<&CellSummary>>,
) -> String {
    let mut md = String::from("# Benchmark report\n\n");
    md.push_str("## Cells\n\n");
    md.push_str(
        "| method | Q | F | S | n | instances | mean infidelity | std | predicted | loose |\n",
    );
    md.push_str("|---|---|---|---|---|---|---|---|---|---|\n");
    for s in summaries {
        md.push_str(&format!(
            "| {} | {} | {} | {} | {} | {} | {:.3e} | {:.3e} | {:.3e} | {:.3e} |\n",
            s.method,
            s.qubits,
            s.fragments,
            s.shots,
            s.n,
            s.instances,
            s.mean_infidelity,
            s.std_infidelity,
            s.predicted_infidelity,
            s.predicted_loose,
        ));
    }

    md.push_str("\n## Shot scaling (log-log slope of mean infidelity vs S)\n\n");
    for (&(q, f), rows) in cells {
        for method in Method::ALL {
            let points: Vec<(f64, f64)> = rows
                .iter()
                .filter(|r| r.method == method && r.mean_infidelity > 0.0)
                .map(|r| ((r.shots as f64).log10(), r.mean_infidelity.log10()))
                .collect();
            if points.len() >= 2 {
                md.push_str(&format!(
                    "- Q={q} F={f} {}: slope {:.3}\n",
                    method,
                    least_squares_slope(&points)
                ));
            }
        }
    }

    md.push_str("\n## Width scaling (slope of log2 mean infidelity vs Q at max S)\n\n");
    for (&f, rows) in by_f {
        for method in Method::ALL {
            let points: Vec<(f64, f64)> = rows
                .iter()
                .filter(|r| r.method == method && r.mean_infidelity > 0.0)
                .map(|r| (r.qubits as f64, r.mean_infidelity.log2()))
                .collect();
            if points.len() >= 2 {
                md.push_str(&format!(
                    "- F={f} {}: slope {:.3}\n",
                    method,
                    least_squares_slope(&points)
                ));
            }
        }
    }
    md
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn spec(method: Method, shots: u64) -> CellSpec {
        CellSpec::new(99, 4, 2, 0, shots, method)
    }

    #[test]
    fn seed_derivation_is_stable_and_order_sensitive() {
        assert_eq!(derive_seed(1, &[2, 3]), derive_seed(1, &[2, 3]));
        assert_ne!(derive_seed(1, &[2, 3]), derive_seed(1, &[3, 2]));
        assert_ne!(derive_seed(1, &[2, 3]), derive_seed(2, &[2, 3]));
        assert_ne!(
            circuit_seed(7, 8, 2, 0),
            full_stream_seed(7, 8, 2, 0, 0)
        );
    }

    #[test]
    fn run_cell_is_deterministic_and_methods_share_counts() {
        let d1 = run_cell(&spec(Method::Direct, 7_000)).unwrap();
        let d2 = run_cell(&spec(Method::Direct, 7_000)).unwrap();
        assert_eq!(d1.infidelity, d2.infidelity);
        assert_eq!(d1.counts_checksum, d2.counts_checksum);
        let m = run_cell(&spec(Method::Mlft, 7_000)).unwrap();
        // Same tomography data, different estimator.
        assert_eq!(m.counts_checksum, d1.counts_checksum);
        assert_eq!(m.n, d1.n);
        assert_eq!(d1.variants, 7);
        assert_eq!(d1.n, 1000);
        assert_eq!(d1.cuts, 1);
    }

    #[test]
    fn full_method_tracks_its_forecast_loosely() {
        let r = run_cell(&spec(Method::Full, 10_000)).unwrap();
        assert_eq!(r.variants, 1);
        assert_eq!(r.n, 10_000);
        assert_eq!(r.clipped_mass, 0.0);
        // (2^4 - 1) / (4 * 10^4) is about 4e-4; allow a wide band.
        assert!(r.infidelity < 0.01, "infidelity {}", r.infidelity);
        assert!(r.infidelity >= 0.0);
    }

    #[test]
    fn cut_methods_reconstruct_with_small_error() {
        for method in [Method::Direct, Method::Mlft] {
            let r = run_cell(&spec(method, 70_000)).unwrap();
            assert!(r.infidelity < 0.05, "{method}: {}", r.infidelity);
        }
    }

    #[test]
    fn budget_below_variant_count_is_rejected() {
        let err = run_cell(&spec(Method::Direct, 6));
        assert!(matches!(
            err,
            Err(Error::InsufficientBudget {
                shots: 6,
                variants: 7
            })
        ));
    }

    #[test]
    fn oversized_circuits_are_rejected_before_any_allocation() {
        // 40 qubits would need terabyte-scale gate matrices; the limit must
        // fire before the circuit is built, not after.
        let mut spec = CellSpec::new(1, 40, 2, 0, 1_000_000, Method::Full);
        assert!(matches!(
            run_cell(&spec),
            Err(Error::StatevectorLimit {
                qubits: 40,
                limit: 26
            })
        ));
        spec.statevector_limit = 40;
        spec.qubits = 4;
        spec.shots = 7000;
        assert!(run_cell(&spec).is_ok());
    }

    fn tiny_config() -> SweepConfig {
        SweepConfig {
            qubits: vec![4],
            fragments: vec![2],
            shots: vec![700, 2_800],
            methods: vec![Method::Full, Method::Direct, Method::Mlft],
            instances: 2,
            master_seed: 5,
            statevector_limit: None,
        }
    }

    #[test]
    fn sweep_writes_canonical_rows_and_reruns_skip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.csv");
        let config = tiny_config();
        let outcome = run_sweep(&config, &path).unwrap();
        assert_eq!(outcome.written, 12);
        assert_eq!(outcome.skipped, 0);
        let records = read_records(&path).unwrap();
        let specs = config.row_specs();
        assert_eq!(records.len(), specs.len());
        for (r, s) in records.iter().zip(&specs) {
            assert!(spec_matches(r, s));
        }
        let bytes_before = std::fs::read(&path).unwrap();
        let outcome = run_sweep(&config, &path).unwrap();
        assert_eq!(outcome.written, 0);
        assert_eq!(outcome.skipped, 12);
        assert_eq!(std::fs::read(&path).unwrap(), bytes_before);
    }

    #[test]
    fn sweep_resumes_from_a_prefix_with_identical_results() {
        let dir = tempfile::tempdir().unwrap();
        let full_path = dir.path().join("full.csv");
        let config = tiny_config();
        run_sweep(&config, &full_path).unwrap();
        let all = read_records(&full_path).unwrap();

        // Keep the header plus the first five rows, then resume.
        let text = std::fs::read_to_string(&full_path).unwrap();
        let prefix: Vec<&str> = text.lines().take(6).collect();
        let partial_path = dir.path().join("partial.csv");
        std::fs::write(&partial_path, format!("{}\n", prefix.join("\n"))).unwrap();
        let outcome = run_sweep(&config, &partial_path).unwrap();
        assert_eq!(outcome.skipped, 5);
        assert_eq!(outcome.written, 7);
        let resumed = read_records(&partial_path).unwrap();
        assert_eq!(resumed.len(), all.len());
        for (a, b) in resumed.iter().zip(&all) {
            assert_eq!(a.infidelity, b.infidelity);
            assert_eq!(a.counts_checksum, b.counts_checksum);
        }
    }

    #[test]
    fn sweep_rejects_foreign_prefixes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.csv");
        let config = tiny_config();
        run_sweep(&config, &path).unwrap();
        let mut other = config.clone();
        other.master_seed = 6;
        assert!(matches!(
            run_sweep(&other, &path),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn csv_header_is_frozen() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.csv");
        let mut config = tiny_config();
        config.shots = vec![700];
        config.methods = vec![Method::Full];
        config.instances = 1;
        run_sweep(&config, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            "method,Q,F,S,n,V,K,instance,seed,infidelity,clipped_mass,wall_time_s,counts_checksum"
        );
    }

    #[test]
    fn summaries_and_report_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.csv");
        let config = tiny_config();
        run_sweep(&config, &path).unwrap();
        let records = read_records(&path).unwrap();
        let summaries = summarize(&records).unwrap();
        // 2 shot levels, 3 methods, one (Q, F) shape.
        assert_eq!(summaries.len(), 6);
        for s in &summaries {
            assert_eq!(s.instances, 2);
            assert!(s.mean_infidelity >= 0.0);
            assert!(s.predicted_infidelity > 0.0);
            assert!(s.predicted_loose >= s.predicted_infidelity);
        }
        // Cut forecast: two classical output wires per fragment, n = 100.
        let direct_small = summaries
            .iter()
            .find(|s| s.method == Method::Direct && s.shots == 700)
            .unwrap();
        assert_eq!(direct_small.n, 100);
        assert_relative_eq!(
            direct_small.predicted_infidelity,
            (4.0 + 4.0) / 100.0,
            epsilon = 1e-12
        );

        let report_dir = dir.path().join("report");
        let files = write_report(&records, &report_dir).unwrap();
        assert!(files.iter().any(|f| f.ends_with("summary.csv")));
        assert!(files
            .iter()
            .any(|f| f.ends_with("infidelity_vs_shots_q4_f2.svg")));
        assert!(files.iter().any(|f| f.ends_with("report.md")));
        for f in &files {
            assert!(f.exists());
        }
        let svg = std::fs::read_to_string(
            report_dir.join("infidelity_vs_shots_q4_f2.svg"),
        )
        .unwrap();
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("polyline"));
        assert!(write_report(&[], &report_dir).is_err());
    }

    #[test]
    fn method_strings_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("bogus".parse::<Method>().is_err());
    }
}
