//! Report schema and emission. Reports are byte-identical for identical
//! config and seed: field order is fixed by the structs, floats come from
//! deterministic computations, and the config hash is taken over a canonical
//! (key-sorted) JSON encoding of the semantic inputs only.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use topospec::sim::{BatchSummary, KwOutcome};
use topospec::spectral::Diagnostics;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub command: String,
    pub gamma: f64,
    pub k_profile: String,
    pub graphs: Vec<GraphReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rankings: Option<Rankings>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank_consistency: Option<RankConsistency>,
    pub warnings: Vec<String>,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphReport {
    pub name: String,
    pub n: usize,
    pub diagnostics: Diagnostics,
    /// The gap understates consensus speed when an aggregator re-injects
    /// averaged state each step, so it is flagged as a lower bound there.
    pub gap_is_lower_bound: bool,
}

/// Predicted orderings, best candidate first. Direction follows each
/// diagnostic's reading: smaller κ, ρ, ρ̃, and predicted error are better;
/// larger gap is better. Ties keep the input order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rankings {
    pub by_kappa: Vec<String>,
    pub by_gap: Vec<String>,
    pub by_rho: Vec<String>,
    pub by_rho_tilde_literal: Vec<String>,
    pub by_rho_tilde_per_step: Vec<String>,
    pub by_drift_prediction: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSection {
    pub sigma: f64,
    pub rho_c: f64,
    pub steps: usize,
    pub trials: usize,
    pub epsilon: f64,
    pub aggregator: String,
    pub per_topology: Vec<TopologySim>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologySim {
    pub topology: String,
    pub summary: BatchSummary,
}

/// Rank agreement between the κ prediction and each simulated metric
/// (Spearman, absent when the inputs are tied) plus cross-topology
/// Kruskal–Wallis H per metric. Consensus-decay entries are absent for
/// one-step horizons.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankConsistency {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spearman_kappa_vs_e_ceg: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spearman_kappa_vs_r_cdr: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spearman_kappa_vs_f_ps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spearman_drift_prediction_vs_e_ceg: Option<f64>,
    pub kruskal_wallis_e_ceg: KwOutcome,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kruskal_wallis_r_cdr: Option<KwOutcome>,
    pub kruskal_wallis_f_ps: KwOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub config_hash: String,
    pub tool_version: String,
    pub library_version: String,
}

pub fn provenance(seed: Option<u64>, config: &serde_json::Value) -> Provenance {
    Provenance {
        seed,
        config_hash: config_hash(config),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        library_version: topospec_version(),
    }
}

fn topospec_version() -> String {
    // The library is a workspace sibling pinned to this package's version.
    env!("CARGO_PKG_VERSION").to_string()
}

/// SHA-256 over the canonical JSON encoding of the semantic config.
/// serde_json maps are key-sorted, so the encoding is canonical by
/// construction; presentation-only options (output path, format) must not
/// be part of `config`.
pub fn config_hash(config: &serde_json::Value) -> String {
    let canonical = serde_json::to_string(config).expect("config value serializes");
    let digest = Sha256::digest(canonical.as_bytes());
    let mut hex = String::with_capacity(64);
    for byte in digest {
        hex.push_str(&format!("{byte:02x}"));
    }
    hex
}

pub fn to_json(report: &Report) -> String {
    let mut text = serde_json::to_string_pretty(report).expect("report serializes");
    text.push('\n');
    text
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"))
}

/// Aligned plain-text rendering of the same report.
pub fn to_text(report: &Report) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{} report  (gamma = {}, k-profile = {})\n\n",
        report.command, report.gamma, report.k_profile
    ));
    out.push_str(&format!(
        "  {:<12} {:>4} {:>10} {:>10} {:>10} {:>10} {:>10}\n",
        "graph", "n", "rho", "gap", "kappa", "rho~", "rho~_c"
    ));
    for g in &report.graphs {
        out.push_str(&format!(
            "  {:<12} {:>4} {:>10.4} {:>10.4} {:>10.4} {:>10.4} {:>10}{}\n",
            g.name,
            g.n,
            g.diagnostics.rho,
            g.diagnostics.gap,
            g.diagnostics.kappa,
            g.diagnostics.rho_tilde,
            fmt_opt(g.diagnostics.rho_tilde_corr),
            if g.gap_is_lower_bound { "  (gap: lower bound)" } else { "" },
        ));
    }
    if let Some(r) = &report.rankings {
        out.push_str("\n  predicted orderings (best first)\n");
        for (label, order) in [
            ("kappa", &r.by_kappa),
            ("gap", &r.by_gap),
            ("rho", &r.by_rho),
            ("rho~ (literal)", &r.by_rho_tilde_literal),
            ("rho~ (per-step)", &r.by_rho_tilde_per_step),
            ("drift prediction", &r.by_drift_prediction),
        ] {
            out.push_str(&format!("    {:<18} {}\n", label, order.join(" < ")));
        }
    }
    if let Some(s) = &report.simulation {
        out.push_str(&format!(
            "\n  simulation  (sigma = {}, rho_c = {}, T = {}, trials = {}, epsilon = {}, aggregator = {})\n",
            s.sigma, s.rho_c, s.steps, s.trials, s.epsilon, s.aggregator
        ));
        out.push_str(&format!(
            "    {:<8} {:>12} {:>12} {:>12} {:>12} {:>12} {:>12}\n",
            "topology", "E_ceg mean", "E_ceg sd", "R_cdr mean", "R_cdr sd", "F_ps mean", "F_ps sd"
        ));
        for t in &s.per_topology {
            out.push_str(&format!(
                "    {:<8} {:>12.4} {:>12.4} {:>12} {:>12} {:>12.4} {:>12.4}\n",
                t.topology,
                t.summary.mean_cumulative_error,
                t.summary.sd_cumulative_error,
                fmt_opt(t.summary.mean_consensus_decay),
                fmt_opt(t.summary.sd_consensus_decay),
                t.summary.mean_perturbation_sensitivity,
                t.summary.sd_perturbation_sensitivity,
            ));
        }
    }
    if let Some(rc) = &report.rank_consistency {
        out.push_str("\n  rank consistency\n");
        out.push_str(&format!(
            "    spearman kappa vs E_ceg: {}   vs R_cdr: {}   vs F_ps: {}\n",
            fmt_opt(rc.spearman_kappa_vs_e_ceg),
            fmt_opt(rc.spearman_kappa_vs_r_cdr),
            fmt_opt(rc.spearman_kappa_vs_f_ps),
        ));
        out.push_str(&format!(
            "    spearman drift prediction vs E_ceg: {}\n",
            fmt_opt(rc.spearman_drift_prediction_vs_e_ceg),
        ));
        let kw = |o: &KwOutcome| {
            if o.degenerate {
                format!("{:.4} (degenerate)", o.h)
            } else {
                format!("{:.4}", o.h)
            }
        };
        out.push_str(&format!(
            "    kruskal-wallis H  E_ceg: {}   R_cdr: {}   F_ps: {}\n",
            kw(&rc.kruskal_wallis_e_ceg),
            rc.kruskal_wallis_r_cdr.as_ref().map_or_else(|| "-".to_string(), kw),
            kw(&rc.kruskal_wallis_f_ps),
        ));
    }
    if !report.warnings.is_empty() {
        out.push_str("\n  warnings\n");
        for w in &report.warnings {
            out.push_str(&format!("    - {w}\n"));
        }
    }
    out.push_str(&format!(
        "\n  provenance  seed = {}  config = {}  version = {}\n",
        report.provenance.seed.map_or_else(|| "-".to_string(), |s| s.to_string()),
        &report.provenance.config_hash[..12],
        report.provenance.tool_version,
    ));
    out
}
