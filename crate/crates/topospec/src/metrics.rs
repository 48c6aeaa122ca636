//! Trajectory-level scalar metrics: cumulative error growth, pairwise
//! disagreement, consensus decay rate, and perturbation sensitivity.

use thiserror::Error;

/// Floor applied to disagreement values before log-ratios. Aggregated
/// topologies genuinely reach exact consensus on discrete fields, where the
/// raw ratio would be undefined.
pub const DISAGREEMENT_FLOOR: f64 = 1e-9;

/// One simulated trial: the ground-truth and estimated Value sequences
/// (length T+1 including the start state), the per-step disagreement series
/// (length T, indexed from step 1), and optionally the final value of the
/// perturbed twin trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub truth: Vec<f64>,
    pub estimate: Vec<f64>,
    pub disagreement: Vec<f64>,
    pub perturbed_final: Option<f64>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("pairwise disagreement needs at least 2 states, got {0}")]
    DegenerateN(usize),
}

/// Σ_{t=1..T} |truth_t − estimate_t|. The start state is excluded.
pub fn cumulative_error(rec: &TrialRecord) -> f64 {
    assert_eq!(rec.truth.len(), rec.estimate.len(), "sequences must align");
    rec.truth
        .iter()
        .zip(rec.estimate.iter())
        .skip(1)
        .map(|(t, e)| (t - e).abs())
        .sum()
}

/// Mean absolute Value difference over ordered pairs:
/// `(1/(N(N−1))) Σ_{i≠j} |s_i − s_j|`. For a chain there is only one live
/// state per step, so the caller substitutes |truth − estimate| instead.
pub fn pairwise_disagreement(states: &[f64]) -> Result<f64, MetricsError> {
    let n = states.len();
    if n < 2 {
        return Err(MetricsError::DegenerateN(n));
    }
    let mut sum = 0.0;
    for (i, a) in states.iter().enumerate() {
        for (j, b) in states.iter().enumerate() {
            if i != j {
                sum += (a - b).abs();
            }
        }
    }
    Ok(sum / (n * (n - 1)) as f64)
}

/// Mean of log(D_{t+1}/D_t), with values floored at [`DISAGREEMENT_FLOOR`]
/// before the ratio. Negative means the agents are converging.
pub fn consensus_decay(d: &[f64]) -> f64 {
    assert!(d.len() >= 2, "consensus decay needs at least 2 disagreement values");
    let floored = |x: f64| x.max(DISAGREEMENT_FLOOR);
    d.windows(2)
        .map(|w| (floored(w[1]) / floored(w[0])).ln())
        .sum::<f64>()
        / (d.len() - 1) as f64
}

/// |final_perturbed − final_base|.
pub fn perturbation_sensitivity(final_base: f64, final_perturbed: f64) -> f64 {
    (final_perturbed - final_base).abs()
}
