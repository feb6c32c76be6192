//! Fidelity and error-scaling metrics for reconstructed distributions.

use crate::circuit::FragmentGraph;
use crate::dist::ProbDist;

/// Classical fidelity: squared Bhattacharyya overlap of two distributions.
/// One when they agree, zero when their supports are disjoint.
pub fn fidelity(p: &ProbDist, q: &ProbDist) -> f64 {
    let overlap: f64 = p
        .iter()
        .map(|(bits, pb)| (pb * q.get(bits)).sqrt())
        .sum();
    overlap * overlap
}

/// Expected infidelity of sampling the full circuit directly: with support
/// on all `2^Q` bitstrings, each of the `2^Q - 1` free frequencies
/// contributes a quarter of its relative variance, giving
/// `(2^Q - 1) / (4 S)`.
pub fn full_infidelity_estimate(num_qubits: usize, shots: u64) -> f64 {
    ((1u64 << num_qubits) - 1) as f64 / (4.0 * shots as f64)
}

/// Shot-noise infidelity forecast for a cut reconstruction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CutCostReport {
    /// Working estimate: each fragment contributes its classical outcome
    /// count over the per-variant shots.
    pub estimate: f64,
    /// Conservative upper bound carrying the `4^K` contraction blow-up,
    /// discounted by each fragment's input-averaging.
    pub bound: f64,
}

/// Forecasts reconstruction infidelity from the cut topology and the number
/// of shots `n` spent on each tomography variant.
pub fn cut_infidelity_estimate(graph: &FragmentGraph, n: u64) -> CutCostReport {
    let n = n as f64;
    let mut estimate = 0.0;
    let mut bound_sum = 0.0;
    for fragment in graph.fragments() {
        let c_out = fragment.classical_output_count() as i32;
        let q_in = fragment.quantum_inputs().len() as i32;
        estimate += 2f64.powi(c_out) / n;
        bound_sum += 2f64.powi(c_out - q_in);
    }
    let bound = 4f64.powi(graph.num_cuts() as i32) / n * bound_sum;
    CutCostReport { estimate, bound }
}

/// Second-order expansion of `1 - fidelity(p, p + e)` in the per-bitstring
/// errors `e`, summed over the support of the reference `p`:
/// `-sum(e) - (sum(e))^2 / 4 + sum(e^2 / p) / 4`.
pub fn second_order_infidelity(p: &ProbDist, q: &ProbDist) -> f64 {
    let mut sum_e = 0.0;
    let mut sum_sq = 0.0;
    for (bits, pb) in p.iter() {
        let e = q.get(bits) - pb;
        sum_e += e;
        sum_sq += e * e / pb;
    }
    -sum_e - 0.25 * sum_e * sum_e + 0.25 * sum_sq
}

/// Covariance of multinomial frequency estimates over `n` draws:
/// `cov[f_b, f_c] = p_b (delta_bc - p_c) / n`.
pub fn multinomial_covariance(probs: &[f64], n: u64) -> Vec<Vec<f64>> {
    let n = n as f64;
    probs
        .iter()
        .enumerate()
        .map(|(b, &pb)| {
            probs
                .iter()
                .enumerate()
                .map(|(c, &pc)| {
                    let delta = if b == c { 1.0 } else { 0.0 };
                    pb * (delta - pc) / n
                })
                .collect()
        })
        .collect()
}

/// Mean and population standard deviation of a set of values.
pub fn instance_stats(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Least-squares slope of `y` against `x`.
pub fn least_squares_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|&(x, _)| x).sum::<f64>() / n;
    let my = points.iter().map(|&(_, y)| y).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|&(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = points.iter().map(|&(x, _)| (x - mx).powi(2)).sum();
    sxy / sxx
}
