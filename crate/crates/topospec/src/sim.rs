//! Monte-Carlo simulation of the three communication topologies under the
//! affine-noise model `x̂_t = τ(x̂_{t−1}) + η_t`, plus the nonparametric rank
//! statistics used to compare predicted and observed topology orderings.
//!
//! Trials are embarrassingly parallel; per-trial RNG streams are derived only
//! from `(seed, trial index)` and results are reduced in trial-index order,
//! so batches are bit-identical regardless of scheduling.

use crate::drift::{NoiseDistribution, NoiseSpec};
use crate::graph::DEFAULT_GAMMA;
use crate::metrics::{
    consensus_decay, cumulative_error, pairwise_disagreement, perturbation_sensitivity,
    TrialRecord,
};
use crate::task::{level_rule, parity_rule, tau, trajectory, Parity, TaskState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Topology {
    Chain,
    Star,
    Mesh,
}

impl Topology {
    pub fn name(self) -> &'static str {
        match self {
            Topology::Chain => "chain",
            Topology::Star => "star",
            Topology::Mesh => "mesh",
        }
    }
}

/// How a judge (or the mesh consensus) combines agent Values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregator {
    Mean,
    Median,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub topology: Topology,
    /// Leaf count for the star, agent count for the mesh; unused by the chain
    /// (one agent per step).
    pub agents: usize,
    pub steps: usize,
    pub trials: usize,
    pub noise: NoiseSpec,
    /// Magnitude of the Value perturbation injected at step 0 of each
    /// trial's twin trajectory.
    pub epsilon: f64,
    pub seed: u64,
    pub initial: TaskState,
    pub aggregator: Aggregator,
    pub gamma: f64,
    /// Variance multiplier for the fresh noise on mesh round-2 re-estimates.
    pub mesh_attenuation: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            topology: Topology::Chain,
            agents: 4,
            steps: 12,
            trials: 100,
            noise: NoiseSpec::default(),
            epsilon: 15.0,
            seed: 42,
            initial: TaskState::new(50.0, Parity::A, 3).expect("valid default state"),
            aggregator: Aggregator::Mean,
            gamma: DEFAULT_GAMMA,
            mesh_attenuation: 0.1,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.trials < 1 {
            return Err(SimError::NoTrials);
        }
        if self.steps < 1 {
            return Err(SimError::NoSteps);
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(SimError::BadEpsilon(self.epsilon));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(SimError::GammaOutOfRange(self.gamma));
        }
        if !(self.mesh_attenuation >= 0.0 && self.mesh_attenuation.is_finite()) {
            return Err(SimError::BadAttenuation(self.mesh_attenuation));
        }
        if self.topology != Topology::Chain && self.agents < 2 {
            return Err(SimError::TooFewAgents {
                topology: self.topology.name(),
                got: self.agents,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("trials must be >= 1")]
    NoTrials,
    #[error("steps must be >= 1")]
    NoSteps,
    #[error("epsilon must be finite and >= 0, got {0}")]
    BadEpsilon(f64),
    #[error("gamma must lie in [0, 1), got {0}")]
    GammaOutOfRange(f64),
    #[error("{topology} topology needs at least 2 agents, got {got}")]
    TooFewAgents { topology: &'static str, got: usize },
    #[error("mesh attenuation must be finite and >= 0, got {0}")]
    BadAttenuation(f64),
    #[error("rank statistics require untied values")]
    TieError,
}

/// Batch-level statistics over trials. Standard deviations are population
/// deviations. Consensus-decay summaries are absent when T < 2 (no ratios
/// exist). Median series follow the record layout: absolute error is indexed
/// from step 0, disagreement from step 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub mean_cumulative_error: f64,
    pub sd_cumulative_error: f64,
    pub mean_consensus_decay: Option<f64>,
    pub sd_consensus_decay: Option<f64>,
    pub mean_perturbation_sensitivity: f64,
    pub sd_perturbation_sensitivity: f64,
    pub median_abs_error: Vec<f64>,
    pub median_disagreement: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialBatch {
    pub records: Vec<TrialRecord>,
    pub summary: BatchSummary,
}

fn sample_centered<R: Rng>(sd: f64, dist: NoiseDistribution, rng: &mut R) -> f64 {
    if sd == 0.0 {
        return 0.0;
    }
    match dist {
        NoiseDistribution::Gaussian => {
            let z: f64 = rng.sample(StandardNormal);
            z * sd
        }
        // A uniform with standard deviation s is U(−s√3, s√3).
        NoiseDistribution::Uniform => rng.random_range(-sd * 3f64.sqrt()..=sd * 3f64.sqrt()),
    }
}

/// τ-update plus noise, with the systemic component `shared` supplied by the
/// caller so it can be drawn once per step and reused across agents.
fn run_agent_shared<R: Rng>(
    s: TaskState,
    noise: &NoiseSpec,
    shared: f64,
    rng: &mut R,
) -> TaskState {
    let indiv_sd = (1.0 - noise.rho_c).sqrt() * noise.sigma;
    let mut out = tau(s);
    out.value += shared + sample_centered(indiv_sd, noise.distribution, rng);
    if noise.p_flip > 0.0 {
        if rng.random_bool(noise.p_flip) {
            out.parity = out.parity.flipped();
        }
        if rng.random_bool(noise.p_flip) {
            let delta = if rng.random_bool(0.5) { 1 } else { -1 };
            out.level = (out.level + delta).clamp(1, 9);
        }
    }
    out
}

/// One noisy agent update: `τ(s)` with `η = b + ξ` added to the Value, where
/// `b` carries the systemic variance ρ_c·σ² and `ξ` the rest. Parity and
/// Level are untouched unless `p_flip > 0`.
pub fn run_agent<R: Rng>(s: TaskState, noise: &NoiseSpec, rng: &mut R) -> TaskState {
    let shared = sample_centered(noise.rho_c.sqrt() * noise.sigma, noise.distribution, rng);
    run_agent_shared(s, noise, shared, rng)
}

fn aggregate(values: &[f64], aggregator: Aggregator) -> f64 {
    match aggregator {
        Aggregator::Mean => values.iter().sum::<f64>() / values.len() as f64,
        Aggregator::Median => {
            let mut v = values.to_vec();
            v.sort_by(f64::total_cmp);
            let mid = v.len() / 2;
            if v.len() % 2 == 1 {
                v[mid]
            } else {
                (v[mid - 1] + v[mid]) / 2.0
            }
        }
    }
}

fn majority_parity(outs: &[TaskState]) -> Option<Parity> {
    let a = outs.iter().filter(|o| o.parity == Parity::A).count();
    let b = outs.len() - a;
    if a > b {
        Some(Parity::A)
    } else if b > a {
        Some(Parity::B)
    } else {
        None
    }
}

fn majority_level(outs: &[TaskState]) -> Option<i64> {
    let mut counts: Vec<(i64, usize)> = Vec::new();
    for o in outs {
        match counts.iter_mut().find(|(l, _)| *l == o.level) {
            Some((_, c)) => *c += 1,
            None => counts.push((o.level, 1)),
        }
    }
    let best = counts.iter().map(|&(_, c)| c).max()?;
    let mut winners = counts.iter().filter(|&&(_, c)| c == best).map(|&(l, _)| l);
    let first = winners.next()?;
    if winners.next().is_some() {
        None
    } else {
        Some(first)
    }
}

/// Deterministic judge: Value by the configured aggregator, Parity and
/// Level by majority vote, ties broken by recomputing the categorical rules
/// from the aggregated Value.
fn judge(prev: &TaskState, outs: &[TaskState], aggregator: Aggregator) -> TaskState {
    let values: Vec<f64> = outs.iter().map(|o| o.value).collect();
    let value = aggregate(&values, aggregator);
    let parity = majority_parity(outs).unwrap_or_else(|| parity_rule(value));
    let level = majority_level(outs).unwrap_or_else(|| level_rule(prev.level, value, parity));
    TaskState { value, parity, level }
}

/// Sequential pipeline: one agent per step. `D_t = |x*_t − x̂_t|`.
pub fn run_chain_trial<R: Rng>(cfg: &SimConfig, rng: &mut R) -> TrialRecord {
    let truth: Vec<f64> = trajectory(cfg.initial, cfg.steps).iter().map(|s| s.value).collect();
    let mut estimate = Vec::with_capacity(cfg.steps + 1);
    let mut disagreement = Vec::with_capacity(cfg.steps);
    let mut s = cfg.initial;
    estimate.push(s.value);
    for truth_t in truth.iter().skip(1) {
        s = run_agent(s, &cfg.noise, rng);
        estimate.push(s.value);
        disagreement.push((truth_t - s.value).abs());
    }
    TrialRecord { truth, estimate, disagreement, perturbed_final: None }
}

/// Judge-aggregated star: at each step, `agents` leaves update the shared
/// state independently and the judge combines their proposals. `D_t` is the
/// pairwise disagreement over leaf Values before judging.
pub fn run_star_trial<R: Rng>(cfg: &SimConfig, rng: &mut R) -> TrialRecord {
    let truth: Vec<f64> = trajectory(cfg.initial, cfg.steps).iter().map(|s| s.value).collect();
    let mut estimate = Vec::with_capacity(cfg.steps + 1);
    let mut disagreement = Vec::with_capacity(cfg.steps);
    let mut s = cfg.initial;
    estimate.push(s.value);
    let shared_sd = cfg.noise.rho_c.sqrt() * cfg.noise.sigma;
    for _ in 1..=cfg.steps {
        let shared = sample_centered(shared_sd, cfg.noise.distribution, rng);
        let outs: Vec<TaskState> =
            (0..cfg.agents).map(|_| run_agent_shared(s, &cfg.noise, shared, rng)).collect();
        let values: Vec<f64> = outs.iter().map(|o| o.value).collect();
        disagreement.push(pairwise_disagreement(&values).expect("star has >= 2 leaves"));
        s = judge(&s, &outs, cfg.aggregator);
        estimate.push(s.value);
    }
    TrialRecord { truth, estimate, disagreement, perturbed_final: None }
}

/// Fully connected mesh: round 1 produces `agents` independent proposals and
/// the consensus state combines them judge-style; round 2 is a deliberation
/// pass in which every agent re-estimates as the round-1 aggregate plus a
/// fresh attenuated draw. `D_t` measures the round-2 spread, so consensus
/// dynamics stay on the round-1 averaging bound while deliberation
/// disagreement remains observable.
pub fn run_mesh_trial<R: Rng>(cfg: &SimConfig, rng: &mut R) -> TrialRecord {
    let truth: Vec<f64> = trajectory(cfg.initial, cfg.steps).iter().map(|s| s.value).collect();
    let mut estimate = Vec::with_capacity(cfg.steps + 1);
    let mut disagreement = Vec::with_capacity(cfg.steps);
    let mut s = cfg.initial;
    estimate.push(s.value);
    let shared_sd = cfg.noise.rho_c.sqrt() * cfg.noise.sigma;
    let round2_sigma = cfg.noise.sigma * cfg.mesh_attenuation.sqrt();
    let round2_shared_sd = cfg.noise.rho_c.sqrt() * round2_sigma;
    let round2_indiv_sd = (1.0 - cfg.noise.rho_c).sqrt() * round2_sigma;
    for _ in 1..=cfg.steps {
        let shared = sample_centered(shared_sd, cfg.noise.distribution, rng);
        let round1: Vec<TaskState> =
            (0..cfg.agents).map(|_| run_agent_shared(s, &cfg.noise, shared, rng)).collect();
        s = judge(&s, &round1, cfg.aggregator);
        let round2_shared = sample_centered(round2_shared_sd, cfg.noise.distribution, rng);
        let round2: Vec<f64> = (0..cfg.agents)
            .map(|_| {
                s.value
                    + round2_shared
                    + sample_centered(round2_indiv_sd, cfg.noise.distribution, rng)
            })
            .collect();
        disagreement.push(pairwise_disagreement(&round2).expect("mesh has >= 2 agents"));
        estimate.push(s.value);
    }
    TrialRecord { truth, estimate, disagreement, perturbed_final: None }
}

fn run_topology_trial<R: Rng>(cfg: &SimConfig, rng: &mut R) -> TrialRecord {
    match cfg.topology {
        Topology::Chain => run_chain_trial(cfg, rng),
        Topology::Star => run_star_trial(cfg, rng),
        Topology::Mesh => run_mesh_trial(cfg, rng),
    }
}

fn run_trial(cfg: &SimConfig, index: u64) -> TrialRecord {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ index);
    // The perturbed twin replays the identical noise stream (common random
    // numbers); draw counts depend only on the config, never on state values.
    let mut twin_rng = rng.clone();
    let mut record = run_topology_trial(cfg, &mut rng);
    let mut perturbed_cfg = cfg.clone();
    perturbed_cfg.initial.value += cfg.epsilon;
    let twin = run_topology_trial(&perturbed_cfg, &mut twin_rng);
    record.perturbed_final = Some(*twin.estimate.last().expect("nonempty trajectory"));
    record
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn population_sd(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64).sqrt()
}

fn median_of(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let mid = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[mid]
    } else {
        (xs[mid - 1] + xs[mid]) / 2.0
    }
}

fn summarize(records: &[TrialRecord], steps: usize) -> BatchSummary {
    let ceg: Vec<f64> = records.iter().map(cumulative_error).collect();
    let fps: Vec<f64> = records
        .iter()
        .map(|r| {
            perturbation_sensitivity(
                *r.estimate.last().expect("nonempty trajectory"),
                r.perturbed_final.expect("twin always recorded"),
            )
        })
        .collect();
    let (mean_cdr, sd_cdr) = if steps >= 2 {
        let cdr: Vec<f64> = records.iter().map(|r| consensus_decay(&r.disagreement)).collect();
        (Some(mean(&cdr)), Some(population_sd(&cdr)))
    } else {
        (None, None)
    };
    let median_abs_error = (0..=steps)
        .map(|t| {
            median_of(records.iter().map(|r| (r.truth[t] - r.estimate[t]).abs()).collect())
        })
        .collect();
    let median_disagreement = (0..steps)
        .map(|t| median_of(records.iter().map(|r| r.disagreement[t]).collect()))
        .collect();
    BatchSummary {
        mean_cumulative_error: mean(&ceg),
        sd_cumulative_error: population_sd(&ceg),
        mean_consensus_decay: mean_cdr,
        sd_consensus_decay: sd_cdr,
        mean_perturbation_sensitivity: mean(&fps),
        sd_perturbation_sensitivity: population_sd(&fps),
        median_abs_error,
        median_disagreement,
    }
}

/// Runs `cfg.trials` independent trials (in parallel) with per-trial RNG
/// streams seeded as `seed ⊕ trial index`, each paired with a perturbed twin
/// sharing the same draws, and reduces them in trial-index order.
pub fn run_batch(cfg: &SimConfig) -> TrialBatch {
    cfg.validate().expect("SimConfig must be valid");
    let records: Vec<TrialRecord> =
        (0..cfg.trials as u64).into_par_iter().map(|i| run_trial(cfg, i)).collect();
    let summary = summarize(&records, cfg.steps);
    TrialBatch { records, summary }
}

/// Kruskal–Wallis H with the average-rank tie correction. A fully tied
/// pooled sample has no rank information; `degenerate` flags that case and
/// H is reported as 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KwOutcome {
    pub h: f64,
    pub degenerate: bool,
}

fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

pub fn kruskal_wallis(groups: &[Vec<f64>]) -> KwOutcome {
    assert!(groups.len() >= 2, "need at least 2 groups");
    assert!(groups.iter().all(|g| !g.is_empty()), "groups must be nonempty");
    let pooled: Vec<f64> = groups.iter().flatten().copied().collect();
    let n = pooled.len() as f64;
    let ranks = average_ranks(&pooled);
    let mut h = 0.0;
    let mut offset = 0;
    for g in groups {
        let r_sum: f64 = ranks[offset..offset + g.len()].iter().sum();
        h += r_sum * r_sum / g.len() as f64;
        offset += g.len();
    }
    h = 12.0 / (n * (n + 1.0)) * h - 3.0 * (n + 1.0);
    // Tie correction: divide by 1 − Σ(t³ − t)/(N³ − N) over tie groups.
    let mut sorted = pooled.clone();
    sorted.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    let correction = 1.0 - tie_term / (n * n * n - n);
    if correction <= 0.0 {
        return KwOutcome { h: 0.0, degenerate: true };
    }
    KwOutcome { h: h / correction, degenerate: false }
}

/// Spearman rank correlation for untied samples:
/// `r_s = 1 − 6Σd²/(n(n²−1))`. The intended inputs are the three topology
/// means, which carry no ties.
pub fn spearman_rank(a: &[f64], b: &[f64]) -> Result<f64, SimError> {
    assert!(a.len() == b.len() && a.len() >= 2, "need equal lengths >= 2");
    let has_ties = |xs: &[f64]| {
        let mut s = xs.to_vec();
        s.sort_by(f64::total_cmp);
        s.windows(2).any(|w| w[0] == w[1])
    };
    if has_ties(a) || has_ties(b) {
        return Err(SimError::TieError);
    }
    let ra = average_ranks(a);
    let rb = average_ranks(b);
    let n = a.len() as f64;
    let d2: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - y).powi(2)).sum();
    Ok(1.0 - 6.0 * d2 / (n * (n * n - 1.0)))
}
