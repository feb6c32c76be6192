//! `qcut`: circuit-cutting reconstruction benchmarks at the command line.
//!
//! Cuts clustered random circuits into fragments, characterizes the
//! fragments by simulated tomography under a finite shot budget, rebuilds
//! the full output distribution with either the direct or the
//! maximum-likelihood estimator, and measures reconstruction infidelity
//! against exact simulation. `sweep` drives grids of such runs; `report`
//! turns the resulting CSV into summary tables and charts.

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use qcut_core::circuit::{circuit_to_json, cuts_to_json};
use qcut_core::harness::{
    instance_circuit, read_records, run_cell, run_sweep, write_report, CellSpec, Method,
    SweepConfig,
};

/// Environment variable overriding the statevector qubit limit everywhere.
const LIMIT_ENV: &str = "QCUT_STATEVECTOR_LIMIT";

#[derive(Parser)]
#[command(name = "qcut", version, about, propagate_version = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print one benchmark instance's circuit and cut set as JSON
    Generate(GenerateArgs),
    /// Run a single benchmark cell and print its result row as CSV
    Run(RunArgs),
    /// Run a whole sweep config, appending result rows to a CSV file
    Sweep(SweepArgs),
    /// Summarize a sweep CSV into tables, SVG charts and a Markdown report
    Report(ReportArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Total qubit count of the circuit
    #[arg(long, short)]
    qubits: usize,
    /// Number of fragments (clusters) to split it into
    #[arg(long, short)]
    fragments: usize,
    /// Master seed; instances are derived from it deterministically
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Instance index within the (qubits, fragments) cell
    #[arg(long, default_value_t = 0)]
    instance: usize,
    /// Output file (stdout when omitted)
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    /// Total qubit count of the circuit
    #[arg(long, short)]
    qubits: usize,
    /// Number of fragments (clusters) to split it into
    #[arg(long, short)]
    fragments: usize,
    /// Total shot budget S, shared across all tomography variants
    #[arg(long, short)]
    shots: u64,
    /// Estimation method: full, direct or mlft
    #[arg(long, short)]
    method: Method,
    /// Master seed; instances are derived from it deterministically
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Instance index within the (qubits, fragments) cell
    #[arg(long, default_value_t = 0)]
    instance: usize,
}

#[derive(Args)]
struct SweepArgs {
    /// Sweep definition (JSON; see `SweepConfig` in the library docs)
    #[arg(long, short)]
    config: PathBuf,
    /// Results CSV; reruns resume by skipping rows already present
    #[arg(long, short)]
    out: PathBuf,
    /// Worker threads (default: one per logical CPU)
    #[arg(long, short)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct ReportArgs {
    /// Results CSV produced by `sweep` or `run`
    #[arg(long = "in", short)]
    input: PathBuf,
    /// Directory for the summary table, charts and report
    #[arg(long, short)]
    out_dir: PathBuf,
}

fn limit_override() -> Result<Option<usize>> {
    match std::env::var(LIMIT_ENV) {
        Ok(text) => {
            let limit: usize = text
                .parse()
                .with_context(|| format!("{LIMIT_ENV} must be a qubit count, got {text:?}"))?;
            Ok(Some(limit))
        }
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(e).context(format!("reading {LIMIT_ENV}")),
    }
}

fn generate(args: GenerateArgs) -> Result<()> {
    // Cluster unitaries grow as fast as statevectors, so exporting a circuit
    // is bounded by the same limit as simulating one.
    let limit = limit_override()?.unwrap_or(qcut_core::fragsim::DEFAULT_STATEVECTOR_LIMIT);
    if args.qubits > limit {
        return Err(qcut_core::Error::StatevectorLimit {
            qubits: args.qubits,
            limit,
        }
        .into());
    }
    let (circuit, cuts) = instance_circuit(args.seed, args.qubits, args.fragments, args.instance)?;
    let payload = serde_json::json!({
        "qubits": args.qubits,
        "fragments": args.fragments,
        "master_seed": args.seed,
        "instance": args.instance,
        "circuit": serde_json::from_str::<serde_json::Value>(&circuit_to_json(&circuit))?,
        "cuts": serde_json::from_str::<serde_json::Value>(&cuts_to_json(&cuts))?,
    });
    let text = serde_json::to_string_pretty(&payload)?;
    match args.out {
        Some(path) => {
            std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?
        }
        None => println!("{text}"),
    }
    Ok(())
}

fn run(args: RunArgs) -> Result<()> {
    let mut spec = CellSpec::new(
        args.seed,
        args.qubits,
        args.fragments,
        args.instance,
        args.shots,
        args.method,
    );
    if let Some(limit) = limit_override()? {
        spec.statevector_limit = limit;
    }
    let record = run_cell(&spec)?;
    let mut writer = csv::Writer::from_writer(std::io::stdout());
    writer.serialize(record)?;
    writer.flush()?;
    Ok(())
}

fn sweep(args: SweepArgs) -> Result<()> {
    if let Some(jobs) = args.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .context("configuring the worker pool")?;
    }
    let text = std::fs::read_to_string(&args.config)
        .with_context(|| format!("reading {}", args.config.display()))?;
    let mut config = SweepConfig::from_json(&text)?;
    if let Some(limit) = limit_override()? {
        config.statevector_limit = Some(limit);
    }
    let outcome = run_sweep(&config, &args.out)?;
    log::info!(
        "{}: {} rows written, {} already present",
        args.out.display(),
        outcome.written,
        outcome.skipped
    );
    Ok(())
}

fn report(args: ReportArgs) -> Result<()> {
    let records = read_records(&args.input)?;
    let files = write_report(&records, &args.out_dir)?;
    for file in files {
        println!("{}", file.display());
    }
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    match Cli::parse().command {
        Command::Generate(args) => generate(args),
        Command::Run(args) => run(args),
        Command::Sweep(args) => sweep(args),
        Command::Report(args) => report(args),
    }
}
