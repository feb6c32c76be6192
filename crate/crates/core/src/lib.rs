//! Cut-and-reconstruct simulation of clustered quantum circuits.
//!
//! A circuit is cut on one or more wires, splitting it into fragments that
//! are small enough to simulate (or run) independently. Each fragment is
//! characterized at its cut points by preparing eigenstates on severed input
//! wires and measuring severed output wires in the three Pauli bases. Two
//! reconstruction pipelines recombine the fragment data into an estimate of
//! the full circuit's output distribution:
//!
//! * [`direct`]: tabulates conditional bitstring distributions per cut
//!   eigenstate, completes the unprepared conditions by linearity, and
//!   contracts the resulting Pauli-axis tensors.
//! * [`mlft`]: fits a block-diagonal process matrix (Choi state) to the same
//!   shot data by least squares, projects it onto the physical (positive
//!   semidefinite, unit trace) set, and contracts tensors derived from the
//!   projected blocks.
//!
//! The [`harness`] module drives full-vs-cut comparison sweeps and records
//! fidelity metrics from [`metrics`].
//!
//! # Conventions
//!
//! * Qubit `q` of a circuit on `n` qubits corresponds to bit `q` of a basis
//!   state index (`(index >> q) & 1`). Bitstrings render with qubit 0 as the
//!   leftmost character, so `"011"` means qubit 0 measured 0, qubits 1 and 2
//!   measured 1, i.e. index `0b110`.
//! * A gate matrix on targets `[t0, t1, .., tk]` is written in the basis
//!   `|t0 t1 .. tk>` with `t0` as the most significant position; the usual
//!   textbook CNOT matrix with `targets = [control, target]` does what it
//!   says.
//! * Measurement outcome `+1` maps to bit 0, `-1` to bit 1.

pub mod circuit;
pub mod direct;
pub mod dist;
pub mod fragsim;
pub mod harness;
pub mod metrics;
pub mod mlft;
pub mod recombine;

pub use circuit::{Circuit, CutPoint, Fragment, FragmentGraph, Gate, Stitch};
pub use dist::ProbDist;
pub use fragsim::{MeasBasis, PrepLabel, VariantCounts, VariantDistribution, VariantKey};
pub use harness::{CellSpec, CellSummary, Method, ResultRecord, SweepConfig};

use thiserror::Error;

/// Crate-wide error type. Variants carry enough context to name the gate,
/// cut, variant or resource that failed validation.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("gate {index}: {reason}")]
    InvalidGate { index: usize, reason: String },

    #[error("cut set invalid: {0}")]
    CutSetInvalid(String),

    #[error("statevector on {qubits} qubits exceeds the limit of {limit}")]
    StatevectorLimit { qubits: usize, limit: usize },

    #[error("incomplete data: {0}")]
    IncompleteData(String),

    #[error("tomography fit failed: {0}")]
    FitFailed(String),

    #[error("fragment tensors do not match the stitch graph: {0}")]
    TopologyMismatch(String),

    #[error("reconstruction is degenerate: no positive mass to normalize")]
    DegenerateReconstruction,

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("shot budget {shots} is below the variant count {variants}")]
    InsufficientBudget { shots: u64, variants: u64 },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
