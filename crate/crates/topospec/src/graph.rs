//! Communication graphs and their row-stochastic transition operators.
//!
//! A [`CommGraph`] is a directed weighted graph over agents; [`row_normalize`]
//! turns it into the transition operator P with `P_ij = A_ij / Σ_k A_ik`.
//! Constructors are provided for the three canonical topologies (chain, star,
//! mesh) and for the adversarially weighted star whose center trusts one leaf
//! `alpha` times more than the others.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

/// Default discount for the successor representation.
pub const DEFAULT_GAMMA: f64 = 0.9;

/// Directed weighted agent graph. Weights are nonnegative and every row has
/// at least one positive entry, so row normalization is always well-defined.
#[derive(Debug, Clone)]
pub struct CommGraph {
    /// Agent count.
    pub n: usize,
    /// n×n nonnegative weight matrix; `adjacency[(i, j)]` weights the edge i→j.
    pub adjacency: DMatrix<f64>,
    /// Optional agent names, length n.
    pub labels: Option<Vec<String>>,
    /// Provenance note for conventions applied during construction (for
    /// example the chain's terminal closure). Not part of graph identity.
    pub note: Option<String>,
}

impl PartialEq for CommGraph {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.adjacency == other.adjacency && self.labels == other.labels
    }
}

/// Row-stochastic transition operator plus the discount it is paired with.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionOp {
    pub p: DMatrix<f64>,
    pub gamma: f64,
}

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("{what} needs at least {min} agents, got {got}")]
    TooFewAgents { what: &'static str, min: usize, got: usize },
    #[error("weight matrix is {rows}x{cols}, expected square")]
    NotSquare { rows: usize, cols: usize },
    #[error("negative weight {value} at ({row}, {col})")]
    NegativeWeight { row: usize, col: usize, value: f64 },
    #[error("non-finite weight at ({row}, {col})")]
    NonFiniteWeight { row: usize, col: usize },
    #[error("row {row} has no outgoing weight (agent with no channel)")]
    ZeroRow { row: usize },
    #[error("{got} labels for {expected} agents")]
    LabelCount { expected: usize, got: usize },
    #[error("alpha must be >= 1, got {0}")]
    AlphaBelowOne(f64),
    #[error("gamma must lie in [0, 1), got {0}")]
    GammaOutOfRange(f64),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("unknown preset '{0}' (expected chain|star|mesh|malicious_star)")]
    UnknownPreset(String),
    #[error("graph file is missing field '{0}'")]
    MissingField(&'static str),
    #[error("field 'n' is {n} but weights are {rows}x{rows}")]
    SizeMismatch { n: usize, rows: usize },
}

impl CommGraph {
    /// Builds a graph from an explicit weight matrix, validating every invariant.
    pub fn new(adjacency: DMatrix<f64>, labels: Option<Vec<String>>) -> Result<Self, GraphError> {
        let (rows, cols) = adjacency.shape();
        if rows != cols {
            return Err(GraphError::NotSquare { rows, cols });
        }
        for i in 0..rows {
            let mut row_sum = 0.0;
            for j in 0..cols {
                let w = adjacency[(i, j)];
                if !w.is_finite() {
                    return Err(GraphError::NonFiniteWeight { row: i, col: j });
                }
                if w < 0.0 {
                    return Err(GraphError::NegativeWeight { row: i, col: j, value: w });
                }
                row_sum += w;
            }
            if row_sum == 0.0 {
                return Err(GraphError::ZeroRow { row: i });
            }
        }
        if let Some(ref l) = labels {
            if l.len() != rows {
                return Err(GraphError::LabelCount { expected: rows, got: l.len() });
            }
        }
        Ok(CommGraph { n: rows, adjacency, labels, note: None })
    }

    /// In-degree of each agent counting only edges from *other* agents.
    /// Self-loops are closure artifacts, not aggregation, so they are skipped.
    pub fn in_degrees_excluding_self(&self) -> Vec<usize> {
        (0..self.n)
            .map(|j| (0..self.n).filter(|&i| i != j && self.adjacency[(i, j)] > 0.0).count())
            .collect()
    }

    /// Whether any agent aggregates two or more peers (star center, mesh nodes).
    pub fn has_aggregator(&self) -> bool {
        self.in_degrees_excluding_self().iter().any(|&d| d >= 2)
    }
}

/// Normalizes each weight row to sum 1, pairing the operator with the default
/// discount γ = 0.9.
pub fn row_normalize(graph: &CommGraph) -> Result<TransitionOp, GraphError> {
    row_normalize_gamma(graph, DEFAULT_GAMMA)
}

/// [`row_normalize`] with an explicit discount in `[0, 1)`.
pub fn row_normalize_gamma(graph: &CommGraph, gamma: f64) -> Result<TransitionOp, GraphError> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(GraphError::GammaOutOfRange(gamma));
    }
    let n = graph.n;
    let mut p = graph.adjacency.clone();
    for i in 0..n {
        let sum: f64 = (0..n).map(|j| p[(i, j)]).sum();
        if sum == 0.0 {
            return Err(GraphError::ZeroRow { row: i });
        }
        for j in 0..n {
            p[(i, j)] /= sum;
        }
    }
    Ok(TransitionOp { p, gamma })
}

/// Raw upper shift matrix (`S[(i, i+1)] = 1`, zero last row). This is the
/// unclosed pipeline operator; it is sub-stochastic and nilpotent.
pub fn chain_shift_matrix(n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| if j == i + 1 { 1.0 } else { 0.0 })
}

/// Pipeline of `n` agents: agent i hands off to agent i+1. The terminal agent
/// gets a self-loop so that row normalization is defined; the convention is
/// recorded in the result's `note`.
pub fn make_chain(n: usize) -> Result<CommGraph, GraphError> {
    if n < 2 {
        return Err(GraphError::TooFewAgents { what: "chain", min: 2, got: n });
    }
    let mut a = chain_shift_matrix(n);
    a[(n - 1, n - 1)] = 1.0;
    let mut g = CommGraph::new(a, None)?;
    g.note = Some("terminal row closed with a self-loop".to_string());
    Ok(g)
}

/// Hub-and-spoke graph: node 0 is the center, connected to every leaf in both
/// directions with unit weights; leaves do not talk to each other.
pub fn make_star(leaves: usize) -> Result<CommGraph, GraphError> {
    if leaves < 2 {
        return Err(GraphError::TooFewAgents { what: "star", min: 2, got: leaves });
    }
    let n = leaves + 1;
    let a = DMatrix::from_fn(n, n, |i, j| {
        if (i == 0 && j != 0) || (j == 0 && i != 0) {
            1.0
        } else {
            0.0
        }
    });
    CommGraph::new(a, None)
}

/// Complete graph with uniform unit off-diagonal weights.
pub fn make_mesh(n: usize) -> Result<CommGraph, GraphError> {
    if n < 2 {
        return Err(GraphError::TooFewAgents { what: "mesh", min: 2, got: n });
    }
    let a = DMatrix::from_fn(n, n, |i, j| if i != j { 1.0 } else { 0.0 });
    CommGraph::new(a, None)
}

/// Star whose center inflates the weight on leaf 1 (node index 1) by `alpha`,
/// so its normalized row becomes `(alpha, 1, …, 1) / (alpha + leaves − 1)`.
/// Leaf rows are unchanged. `alpha = 1` is the benign star.
pub fn make_malicious_star(leaves: usize, alpha: f64) -> Result<CommGraph, GraphError> {
    if leaves < 2 {
        return Err(GraphError::TooFewAgents { what: "malicious star", min: 2, got: leaves });
    }
    if alpha.is_nan() || alpha < 1.0 {
        return Err(GraphError::AlphaBelowOne(alpha));
    }
    let mut g = make_star(leaves)?;
    g.adjacency[(0, 1)] = alpha;
    Ok(g)
}

/// One entry of the optional `steps` array of a graph file: either an explicit
/// weight matrix for that step or a per-agent reliability vector (consumed by
/// the dynamic-operator module).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reliabilities: Option<Vec<f64>>,
}

/// On-disk graph schema: either an explicit `weights` matrix (with optional
/// `n`, `labels`, `gamma`) or a `preset` with its size parameters. The
/// optional `steps` array describes a time-varying operator sequence.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub leaves: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<Vec<StepSpec>>,
}

impl GraphFile {
    /// Materializes the described graph, validating invariants.
    pub fn to_graph(&self) -> Result<CommGraph, GraphError> {
        if let Some(ref preset) = self.preset {
            return match preset.as_str() {
                "chain" => make_chain(self.n.ok_or(GraphError::MissingField("n"))?),
                "star" => make_star(self.leaves.ok_or(GraphError::MissingField("leaves"))?),
                "mesh" => make_mesh(self.n.ok_or(GraphError::MissingField("n"))?),
                "malicious_star" => make_malicious_star(
                    self.leaves.ok_or(GraphError::MissingField("leaves"))?,
                    self.alpha.ok_or(GraphError::MissingField("alpha"))?,
                ),
                other => Err(GraphError::UnknownPreset(other.to_string())),
            };
        }
        let rows = self.weights.as_ref().ok_or(GraphError::MissingField("weights"))?;
        let size = rows.len();
        if let Some(n) = self.n {
            if n != size {
                return Err(GraphError::SizeMismatch { n, rows: size });
            }
        }
        for r in rows {
            if r.len() != size {
                return Err(GraphError::NotSquare { rows: size, cols: r.len() });
            }
        }
        let a = DMatrix::from_fn(size, size, |i, j| rows[i][j]);
        CommGraph::new(a, self.labels.clone())
    }

    /// Encodes a graph in explicit-matrix form.
    pub fn from_graph(g: &CommGraph) -> Self {
        let weights = (0..g.n)
            .map(|i| (0..g.n).map(|j| g.adjacency[(i, j)]).collect())
            .collect();
        GraphFile {
            n: Some(g.n),
            weights: Some(weights),
            labels: g.labels.clone(),
            ..GraphFile::default()
        }
    }
}

/// Parses a graph file (see [`GraphFile`] for the schema) and validates it.
pub fn load_graph(path: impl AsRef<Path>) -> Result<CommGraph, GraphError> {
    load_graph_file(path.as_ref())?.to_graph()
}

/// Parses a graph file without materializing it, giving access to `gamma`
/// and `steps`.
pub fn load_graph_file(path: impl AsRef<Path>) -> Result<GraphFile, GraphError> {
    let path = path.as_ref();
    let display = path.display().to_string();
    let text = std::fs::read_to_string(path)
        .map_err(|source| GraphError::Io { path: display.clone(), source })?;
    serde_json::from_str(&text).map_err(|e| GraphError::Parse { path: display, message: e.to_string() })
}

/// Writes a graph in explicit-matrix form.
pub fn save_graph(g: &CommGraph, path: impl AsRef<Path>) -> Result<(), GraphError> {
    let path = path.as_ref();
    let display = path.display().to_string();
    let text = serde_json::to_string_pretty(&GraphFile::from_graph(g))
        .expect("graph serialization cannot fail");
    std::fs::write(path, text).map_err(|source| GraphError::Io { path: display, source })
}
