//! Time-varying, reliability-weighted transition operators and their
//! spectral reductions: attention-style row softmax over neighborhoods, the
//! finite-horizon backward recursion `M^(t) = I + γ P^(t) M^(t+1)`, and the
//! variance-optimal weighting identity.

use crate::graph::{CommGraph, GraphError, StepSpec, TransitionOp};
use crate::spectral::{self, condition_number};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Monotone map applied to reliabilities inside the attention score. Natural
/// log is the default and the one that makes the variance-optimality
/// identity exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phi {
    Ln,
    Identity,
}

impl Phi {
    fn apply(self, r: f64) -> f64 {
        match self {
            Phi::Ln => r.ln(),
            Phi::Identity => r,
        }
    }
}

/// Inputs to the attention-weighted transition `e_ij = LeakyReLU(aᵀ[Wh_i ‖
/// Wh_j]) + β·φ(r_j)`, row-softmaxed over each agent's neighborhood.
/// Features, projection, and attention vector are supplied, not learned.
#[derive(Debug, Clone, PartialEq)]
pub struct DynOperator {
    pub features: Vec<DVector<f64>>,
    pub projection: DMatrix<f64>,
    pub attention: DVector<f64>,
    pub beta: f64,
    pub reliabilities: Vec<f64>,
    pub phi: Phi,
    pub leaky_slope: f64,
    pub neighborhoods: Vec<Vec<usize>>,
}

impl DynOperator {
    /// Operator with zero feature terms: scores reduce to `β·φ(r_j)`, the
    /// pure reliability-weighting regime.
    pub fn featureless(neighborhoods: Vec<Vec<usize>>, reliabilities: Vec<f64>, beta: f64) -> Self {
        let n = neighborhoods.len();
        DynOperator {
            features: vec![DVector::zeros(1); n],
            projection: DMatrix::zeros(1, 1),
            attention: DVector::zeros(2),
            beta,
            reliabilities,
            phi: Phi::Ln,
            leaky_slope: 0.01,
            neighborhoods,
        }
    }
}

/// Finite-horizon successor operators: `ms[t]` is `M^(t)` for `t = 0..=T`
/// with the base case `ms[T] = I`, and `ps[t]` the step transition `P^(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DynSR {
    pub horizon: usize,
    pub gamma: f64,
    pub ms: Vec<DMatrix<f64>>,
    pub ps: Vec<DMatrix<f64>>,
}

/// The three reductions of a time-varying operator family: per-step
/// `κ(M^(t))` for `t = 0..T−1`, κ of the time-averaged surrogate
/// `(I − γP̄)⁻¹`, and the supremum over steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynReductions {
    pub instantaneous: Vec<f64>,
    pub averaged: f64,
    pub worst_case: f64,
}

/// Analytic inverse-variance optimum alongside the softmax weights produced
/// by the real attention path under `β·φ(r_j) = −log σ_j²`.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimalWeights {
    pub analytic: Vec<f64>,
    pub softmax: Vec<f64>,
}

#[derive(Debug, Error)]
pub enum DynError {
    #[error("agent {agent} has an empty neighborhood")]
    EmptyNeighborhood { agent: usize },
    #[error("agent {agent} lists neighbor {neighbor}, but there are only {n} agents")]
    NeighborOutOfRange { agent: usize, neighbor: usize, n: usize },
    #[error("{what} has inconsistent dimensions")]
    DimensionMismatch { what: &'static str },
    #[error("reliability of agent {agent} must be finite and > 0, got {value}")]
    BadReliability { agent: usize, value: f64 },
    #[error("beta must be finite and >= 0, got {0}")]
    BadBeta(f64),
    #[error("operator list is empty")]
    EmptyHorizon,
    #[error("step {index} must provide exactly one of weights or reliabilities")]
    BadStep { index: usize },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

fn leaky_relu(x: f64, slope: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        slope * x
    }
}

/// Materializes the attention-weighted row-stochastic transition for one
/// step, paired with the discount the caller will feed the recursion.
pub fn dyn_transition(op: &DynOperator, gamma: f64) -> Result<TransitionOp, DynError> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(GraphError::GammaOutOfRange(gamma).into());
    }
    if !(op.beta >= 0.0 && op.beta.is_finite()) {
        return Err(DynError::BadBeta(op.beta));
    }
    let n = op.neighborhoods.len();
    if op.features.len() != n || op.reliabilities.len() != n {
        return Err(DynError::DimensionMismatch { what: "per-agent fields" });
    }
    let d = op.projection.ncols();
    let d_proj = op.projection.nrows();
    if op.attention.len() != 2 * d_proj {
        return Err(DynError::DimensionMismatch { what: "attention vector" });
    }
    if op.features.iter().any(|h| h.len() != d) {
        return Err(DynError::DimensionMismatch { what: "feature vectors" });
    }
    for (agent, &value) in op.reliabilities.iter().enumerate() {
        if !(value > 0.0 && value.is_finite()) {
            return Err(DynError::BadReliability { agent, value });
        }
    }
    let projected: Vec<DVector<f64>> = op.features.iter().map(|h| &op.projection * h).collect();
    let a_self = op.attention.rows(0, d_proj);
    let a_peer = op.attention.rows(d_proj, d_proj);
    let mut p = DMatrix::zeros(n, n);
    for i in 0..n {
        let neighborhood = &op.neighborhoods[i];
        if neighborhood.is_empty() {
            return Err(DynError::EmptyNeighborhood { agent: i });
        }
        let mut scores = Vec::with_capacity(neighborhood.len());
        for &j in neighborhood {
            if j >= n {
                return Err(DynError::NeighborOutOfRange { agent: i, neighbor: j, n });
            }
            let feature_term = a_self.dot(&projected[i]) + a_peer.dot(&projected[j]);
            scores.push(
                leaky_relu(feature_term, op.leaky_slope)
                    + op.beta * op.phi.apply(op.reliabilities[j]),
            );
        }
        let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        for (&j, e) in neighborhood.iter().zip(&exps) {
            p[(i, j)] = e / total;
        }
    }
    Ok(TransitionOp { p, gamma })
}

/// Backward recursion `M^(t) = I + γ P^(t) M^(t+1)` from `M^(T) = I`.
/// `ops[t]` supplies `P^(t)`; the discount is the explicit argument.
pub fn dyn_successor(ops: &[TransitionOp], gamma: f64) -> Result<DynSR, DynError> {
    if ops.is_empty() {
        return Err(DynError::EmptyHorizon);
    }
    if !(0.0..1.0).contains(&gamma) {
        return Err(GraphError::GammaOutOfRange(gamma).into());
    }
    let n = ops[0].p.nrows();
    if ops.iter().any(|op| op.p.nrows() != n || op.p.ncols() != n) {
        return Err(DynError::DimensionMismatch { what: "operator sequence" });
    }
    let horizon = ops.len();
    let eye = DMatrix::identity(n, n);
    let mut ms = vec![eye.clone(); horizon + 1];
    for t in (0..horizon).rev() {
        ms[t] = &eye + gamma * &ops[t].p * &ms[t + 1];
    }
    let ps = ops.iter().map(|op| op.p.clone()).collect();
    Ok(DynSR { horizon, gamma, ms, ps })
}

/// The instantaneous / averaged / worst-case κ reductions.
pub fn dyn_reductions(dsr: &DynSR) -> DynReductions {
    let instantaneous: Vec<f64> =
        (0..dsr.horizon).map(|t| condition_number(&dsr.ms[t])).collect();
    let n = dsr.ps[0].nrows();
    let mut p_bar = DMatrix::zeros(n, n);
    for p in &dsr.ps {
        p_bar += p;
    }
    p_bar /= dsr.horizon as f64;
    let averaged = spectral::successor(&TransitionOp { p: p_bar, gamma: dsr.gamma })
        .expect("averaged row-stochastic operator is nonsingular for gamma < 1")
        .kappa();
    let worst_case = instantaneous.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    DynReductions { instantaneous, averaged, worst_case }
}

/// Checks the inverse-variance identity on a one-aggregator star: agent 0
/// attends to k sources with reliabilities `r_j = 1/σ_j²`, β = 1, φ = ln.
/// `analytic` is `(1/σ_j²)/Σ(1/σ_l²)`; `softmax` is row 0 of the real
/// attention path, which must coincide when feature terms vanish.
pub fn optimal_weight_check(sigma_squared: &[f64]) -> Result<OptimalWeights, DynError> {
    if sigma_squared.is_empty() {
        return Err(DynError::DimensionMismatch { what: "variance list" });
    }
    for (agent, &v) in sigma_squared.iter().enumerate() {
        if !(v > 0.0 && v.is_finite()) {
            return Err(DynError::BadReliability { agent, value: v });
        }
    }
    let k = sigma_squared.len();
    let inv: Vec<f64> = sigma_squared.iter().map(|&v| 1.0 / v).collect();
    let total: f64 = inv.iter().sum();
    let analytic: Vec<f64> = inv.iter().map(|&w| w / total).collect();

    let mut neighborhoods = vec![(1..=k).collect::<Vec<usize>>()];
    let mut reliabilities = vec![1.0];
    for &w in &inv {
        neighborhoods.push(vec![0]);
        reliabilities.push(w);
    }
    let op = DynOperator::featureless(neighborhoods, reliabilities, 1.0);
    let p = dyn_transition(&op, 0.9)?.p;
    let softmax: Vec<f64> = (1..=k).map(|j| p[(0, j)]).collect();
    Ok(OptimalWeights { analytic, softmax })
}

/// Projected gradient descent for `min_α σ_b² + Σ α_j² σ_j²` over the
/// simplex — the brute-force oracle the softmax weights are checked against.
/// The systemic floor σ_b² is weight-independent, so it is omitted from the
/// objective.
pub fn minimize_aggregated_variance(sigma_squared: &[f64], iterations: usize) -> Vec<f64> {
    assert!(!sigma_squared.is_empty());
    assert!(sigma_squared.iter().all(|&v| v > 0.0 && v.is_finite()));
    let k = sigma_squared.len();
    let mut alpha = vec![1.0 / k as f64; k];
    let max_var = sigma_squared.iter().copied().fold(0.0, f64::max);
    let step = 0.45 / max_var;
    for _ in 0..iterations {
        for (a, &v) in alpha.iter_mut().zip(sigma_squared) {
            *a -= step * 2.0 * *a * v;
        }
        project_to_simplex(&mut alpha);
    }
    alpha
}

/// Euclidean projection onto `{α : α_j ≥ 0, Σα_j = 1}`.
fn project_to_simplex(alpha: &mut [f64]) {
    let mut sorted = alpha.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut acc = 0.0;
    let mut theta = 0.0;
    for (i, &u) in sorted.iter().enumerate() {
        acc += u;
        let candidate = (acc - 1.0) / (i + 1) as f64;
        if u - candidate > 0.0 {
            theta = candidate;
        }
    }
    for a in alpha.iter_mut() {
        *a = (*a - theta).max(0.0);
    }
}

/// Expands a graph file's `steps` extension into per-step transitions over
/// the base graph: a step either supplies an explicit weight matrix or
/// reliabilities to softmax over the base adjacency's support.
pub fn operators_from_steps(
    base: &CommGraph,
    steps: &[StepSpec],
    gamma: f64,
) -> Result<Vec<TransitionOp>, DynError> {
    let support: Vec<Vec<usize>> = (0..base.n)
        .map(|i| (0..base.n).filter(|&j| base.adjacency[(i, j)] > 0.0).collect())
        .collect();
    let mut ops = Vec::with_capacity(steps.len());
    for (index, step) in steps.iter().enumerate() {
        match (&step.weights, &step.reliabilities) {
            (Some(weights), None) => {
                let rows = weights.len();
                let mut m = DMatrix::zeros(rows, rows);
                for (i, row) in weights.iter().enumerate() {
                    if row.len() != rows {
                        return Err(GraphError::NotSquare { rows, cols: row.len() }.into());
                    }
                    for (j, &w) in row.iter().enumerate() {
                        m[(i, j)] = w;
                    }
                }
                let g = CommGraph::new(m, None)?;
                if g.n != base.n {
                    return Err(GraphError::SizeMismatch { n: base.n, rows: g.n }.into());
                }
                ops.push(crate::graph::row_normalize_gamma(&g, gamma)?);
            }
            (None, Some(reliabilities)) => {
                if reliabilities.len() != base.n {
                    return Err(DynError::DimensionMismatch { what: "step reliabilities" });
                }
                let op =
                    DynOperator::featureless(support.clone(), reliabilities.clone(), 1.0);
                ops.push(dyn_transition(&op, gamma)?);
            }
            _ => return Err(DynError::BadStep { index }),
        }
    }
    Ok(ops)
}
