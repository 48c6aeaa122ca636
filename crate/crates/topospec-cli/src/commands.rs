//! The three commands: `diagnose` (closed-form spectral analysis),
//! `simulate` (Monte-Carlo batches plus rank-consistency statistics), and
//! `sweep` (one-parameter grids emitted as CSV).

use crate::report::{
    provenance, GraphReport, RankConsistency, Rankings, Report, SimSection, TopologySim,
};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;
use topospec::drift::{self, KProfile, NoiseDistribution, NoiseSpec};
use topospec::graph::{self, DEFAULT_GAMMA};
use topospec::metrics::{consensus_decay, cumulative_error, perturbation_sensitivity};
use topospec::sim::{self, Aggregator, SimConfig, Topology, TrialBatch};
use topospec::spectral::{self, SuccessorRep};
use topospec::task::TaskState;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl From<graph::GraphError> for CliError {
    fn from(e: graph::GraphError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<spectral::SpectralError> for CliError {
    fn from(e: spectral::SpectralError) -> Self {
        CliError::Validation(e.to_string())
    }
}

#[derive(clap::ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KProfileChoice {
    /// k_i from each agent's in-degree
    Literal,
    /// one uniform aggregation count per pipeline step
    PerStep,
}

impl KProfileChoice {
    pub fn label(self) -> &'static str {
        match self {
            KProfileChoice::Literal => "literal",
            KProfileChoice::PerStep => "per-step",
        }
    }
}

#[derive(clap::ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum AggregatorChoice {
    Mean,
    Median,
}

impl From<AggregatorChoice> for Aggregator {
    fn from(c: AggregatorChoice) -> Aggregator {
        match c {
            AggregatorChoice::Mean => Aggregator::Mean,
            AggregatorChoice::Median => Aggregator::Median,
        }
    }
}

#[derive(clap::ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Text,
    Json,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TopologySelection {
    Presets(Vec<Topology>),
    File(PathBuf),
}

pub fn parse_topology_selection(s: &str) -> Result<TopologySelection, String> {
    match s {
        "chain" => Ok(TopologySelection::Presets(vec![Topology::Chain])),
        "star" => Ok(TopologySelection::Presets(vec![Topology::Star])),
        "mesh" => Ok(TopologySelection::Presets(vec![Topology::Mesh])),
        "all" => Ok(TopologySelection::Presets(vec![
            Topology::Chain,
            Topology::Star,
            Topology::Mesh,
        ])),
        other => match other.strip_prefix("file:") {
            Some(path) if !path.is_empty() => Ok(TopologySelection::File(PathBuf::from(path))),
            _ => Err(format!(
                "unknown topology '{other}' (expected chain|star|mesh|all|file:<path>)"
            )),
        },
    }
}

impl TopologySelection {
    fn echo(&self) -> String {
        match self {
            TopologySelection::Presets(list) => {
                list.iter().map(|t| t.name()).collect::<Vec<_>>().join(",")
            }
            TopologySelection::File(path) => format!("file:{}", path.display()),
        }
    }
}

#[derive(clap::Args, Debug, Clone)]
pub struct DiagnoseArgs {
    /// Graph to analyze: chain|star|mesh|all|file:<path>
    #[arg(long, default_value = "all", value_parser = parse_topology_selection)]
    pub topology: TopologySelection,
    /// Discount for the successor representation (a graph file may carry its own)
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Aggregation profile used for the reported drift gain
    #[arg(long, value_enum, default_value_t = KProfileChoice::Literal)]
    pub k_profile: KProfileChoice,
    /// Systemic noise correlation; enables the corrected gain when set
    #[arg(long)]
    pub rho_c: Option<f64>,
    /// Star leaf count / mesh agent count
    #[arg(long, default_value_t = 4)]
    pub agents: usize,
    /// Chain length, also the horizon of the drift predictor
    #[arg(long, default_value_t = 12)]
    pub steps: usize,
    /// Write the report here instead of stdout
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
}

#[derive(clap::Args, Debug, Clone)]
pub struct SimulateArgs {
    /// JSON config file; explicit flags override its values
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// chain|star|mesh|all (file graphs are diagnose-only)
    #[arg(long, value_parser = parse_topology_selection)]
    pub topology: Option<TopologySelection>,
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Per-agent noise standard deviation
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Systemic share of the noise variance, in [0, 1]
    #[arg(long)]
    pub rho_c: Option<f64>,
    /// Perturbation magnitude for the twin trajectory
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub n_trials: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Star leaf count / mesh agent count
    #[arg(long)]
    pub agents: Option<usize>,
    #[arg(long, value_enum)]
    pub aggregator: Option<AggregatorChoice>,
    #[arg(long, value_enum, default_value_t = KProfileChoice::Literal)]
    pub k_profile: KProfileChoice,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
}

#[derive(clap::ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParameter {
    Gamma,
    Sigma,
    #[value(name = "T", alias = "t")]
    T,
    K,
    Alpha,
    #[value(name = "rho_c", alias = "rho-c")]
    RhoC,
}

#[derive(clap::Args, Debug, Clone)]
pub struct SweepArgs {
    /// Which knob to sweep
    #[arg(long, value_enum)]
    pub parameter: SweepParameter,
    /// Comma-separated grid values, e.g. "4,8,16,32"
    #[arg(long)]
    pub grid: String,
    /// Topologies for per-topology sweeps (k/alpha sweeps fix their own)
    #[arg(long, value_parser = parse_topology_selection)]
    pub topology: Option<TopologySelection>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub rho_c: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub n_trials: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub agents: Option<usize>,
    #[arg(long, value_enum)]
    pub aggregator: Option<AggregatorChoice>,
    /// Write the CSV here instead of stdout
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Per-graph analytic bundle plus the ranking keys derived from it.
struct Analysis {
    name: String,
    n: usize,
    gap_is_lower_bound: bool,
    diagnostics: spectral::Diagnostics,
    rho: f64,
    gap: f64,
    kappa: f64,
    rho_tilde_literal: f64,
    rho_tilde_per_step: f64,
    drift_prediction: f64,
}

fn validate_rho_c(rho_c: Option<f64>) -> Result<(), CliError> {
    if let Some(v) = rho_c {
        if !(0.0..=1.0).contains(&v) {
            return Err(CliError::Validation(format!("rho_c must lie in [0, 1], got {v}")));
        }
    }
    Ok(())
}

fn build_analysis(
    name: String,
    g: &graph::CommGraph,
    sr: &SuccessorRep,
    per_step: Option<&KProfile>,
    steps: usize,
    choice: KProfileChoice,
    rho_c: Option<f64>,
) -> Analysis {
    let literal = KProfile::literal(g);
    // Graphs without a canonical pipeline decomposition (loaded files) fall
    // back to the literal profile for the per-step readings.
    let per_step = per_step.unwrap_or(&literal);
    let chosen = match choice {
        KProfileChoice::Literal => &literal,
        KProfileChoice::PerStep => per_step,
    };
    let diagnostics = spectral::diagnostics(sr, chosen, rho_c);
    let rho = sr.rho();
    let horizon = (steps as f64).powf(1.5);
    Analysis {
        name,
        n: g.n,
        gap_is_lower_bound: g.has_aggregator(),
        rho,
        gap: sr.gap(),
        kappa: sr.kappa(),
        rho_tilde_literal: drift::rho_tilde(rho, &literal),
        rho_tilde_per_step: drift::rho_tilde(rho, per_step),
        // Unit-noise, unit-constant cumulative-error predictor: for a
        // uniform per-step count k this is T^1.5/sqrt(k).
        drift_prediction: drift::rho_tilde(1.0, per_step) * horizon,
        diagnostics,
    }
}

fn analyze_preset(
    topology: Topology,
    gamma: f64,
    agents: usize,
    steps: usize,
    choice: KProfileChoice,
    rho_c: Option<f64>,
) -> Result<Analysis, CliError> {
    let (sr, g, per_step_k) = match topology {
        // The chain's transition is the pure shift: the terminal closure row
        // exists only to make the weight matrix stochastic and would
        // otherwise pollute the conditioning of a finite pipeline.
        Topology::Chain => (
            spectral::successor_shift_only(steps, gamma)?,
            graph::make_chain(steps)?,
            1usize,
        ),
        Topology::Star => {
            let g = graph::make_star(agents)?;
            let sr = spectral::successor(&graph::row_normalize_gamma(&g, gamma)?)?;
            (sr, g, agents)
        }
        Topology::Mesh => {
            let g = graph::make_mesh(agents)?;
            let sr = spectral::successor(&graph::row_normalize_gamma(&g, gamma)?)?;
            (sr, g, agents)
        }
    };
    let per_step = KProfile::uniform(1, per_step_k).expect("positive count");
    Ok(build_analysis(
        topology.name().to_string(),
        &g,
        &sr,
        Some(&per_step),
        steps,
        choice,
        rho_c,
    ))
}

fn analyze_file(
    path: &Path,
    gamma_flag: Option<f64>,
    steps: usize,
    choice: KProfileChoice,
    rho_c: Option<f64>,
    warnings: &mut Vec<String>,
) -> Result<(Analysis, f64), CliError> {
    let gf = graph::load_graph_file(path)?;
    let g = gf.to_graph()?;
    let gamma = gamma_flag.or(gf.gamma).unwrap_or(DEFAULT_GAMMA);
    let sr = spectral::successor(&graph::row_normalize_gamma(&g, gamma)?)?;
    if choice == KProfileChoice::PerStep {
        warnings.push(
            "per-step aggregation profile is undefined for file graphs; \
             the literal in-degree profile was used instead"
                .to_string(),
        );
    }
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string());
    let analysis =
        build_analysis(name, &g, &sr, None, steps, KProfileChoice::Literal, rho_c);
    Ok((analysis, gamma))
}

fn ranked_by(analyses: &[Analysis], key: impl Fn(&Analysis) -> f64, ascending: bool) -> Vec<String> {
    let mut order: Vec<usize> = (0..analyses.len()).collect();
    order.sort_by(|&a, &b| {
        let (x, y) = (key(&analyses[a]), key(&analyses[b]));
        if ascending {
            x.total_cmp(&y)
        } else {
            y.total_cmp(&x)
        }
    });
    order.into_iter().map(|i| analyses[i].name.clone()).collect()
}

fn build_rankings(analyses: &[Analysis]) -> Rankings {
    Rankings {
        by_kappa: ranked_by(analyses, |a| a.kappa, true),
        by_gap: ranked_by(analyses, |a| a.gap, false),
        by_rho: ranked_by(analyses, |a| a.rho, true),
        by_rho_tilde_literal: ranked_by(analyses, |a| a.rho_tilde_literal, true),
        by_rho_tilde_per_step: ranked_by(analyses, |a| a.rho_tilde_per_step, true),
        by_drift_prediction: ranked_by(analyses, |a| a.drift_prediction, true),
    }
}

fn ordering_warnings(rankings: &Rankings, analyses: &[Analysis], warnings: &mut Vec<String>) {
    if rankings.by_rho_tilde_literal != rankings.by_drift_prediction
        || rankings.by_rho_tilde_per_step != rankings.by_drift_prediction
    {
        warnings.push(
            "the drift-corrected gain rho~ orders aggregated topologies as riskier than the \
             chain, which is opposite to the drift ordering its own error law predicts; use \
             by_drift_prediction when ranking for stochastic drift"
                .to_string(),
        );
    }
    let flagged: Vec<&str> = analyses
        .iter()
        .filter(|a| a.gap_is_lower_bound)
        .map(|a| a.name.as_str())
        .collect();
    if !flagged.is_empty() {
        warnings.push(format!(
            "spectral gap is a consensus-speed lower bound for graphs with an aggregator \
             node ({})",
            flagged.join(", ")
        ));
    }
}

fn graph_reports(analyses: &[Analysis]) -> Vec<GraphReport> {
    analyses
        .iter()
        .map(|a| GraphReport {
            name: a.name.clone(),
            n: a.n,
            diagnostics: a.diagnostics.clone(),
            gap_is_lower_bound: a.gap_is_lower_bound,
        })
        .collect()
}

pub fn cmd_diagnose(args: &DiagnoseArgs) -> Result<Report, CliError> {
    validate_rho_c(args.rho_c)?;
    let mut warnings = Vec::new();
    let (analyses, gamma) = match &args.topology {
        TopologySelection::Presets(list) => {
            let gamma = args.gamma.unwrap_or(DEFAULT_GAMMA);
            let analyses = list
                .iter()
                .map(|&t| {
                    analyze_preset(t, gamma, args.agents, args.steps, args.k_profile, args.rho_c)
                })
                .collect::<Result<Vec<_>, _>>()?;
            (analyses, gamma)
        }
        TopologySelection::File(path) => {
            let (analysis, gamma) = analyze_file(
                path,
                args.gamma,
                args.steps,
                args.k_profile,
                args.rho_c,
                &mut warnings,
            )?;
            (vec![analysis], gamma)
        }
    };
    let rankings = build_rankings(&analyses);
    ordering_warnings(&rankings, &analyses, &mut warnings);
    let config = serde_json::json!({
        "command": "diagnose",
        "topology": args.topology.echo(),
        "gamma": gamma,
        "k_profile": args.k_profile.label(),
        "rho_c": args.rho_c,
        "agents": args.agents,
        "steps": args.steps,
    });
    Ok(Report {
        command: "diagnose".to_string(),
        gamma,
        k_profile: args.k_profile.label().to_string(),
        graphs: graph_reports(&analyses),
        rankings: Some(rankings),
        simulation: None,
        rank_consistency: None,
        warnings,
        provenance: provenance(None, &config),
    })
}

/// Simulate config file schema; every field optional, flags take precedence.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateFileConfig {
    pub topology: Option<String>,
    pub agents: Option<usize>,
    pub steps: Option<usize>,
    pub trials: Option<usize>,
    pub sigma: Option<f64>,
    pub rho_c: Option<f64>,
    pub distribution: Option<NoiseDistribution>,
    pub p_flip: Option<f64>,
    pub epsilon: Option<f64>,
    pub seed: Option<u64>,
    pub initial: Option<TaskState>,
    pub aggregator: Option<Aggregator>,
    pub gamma: Option<f64>,
    pub mesh_attenuation: Option<f64>,
}

fn load_simulate_config(path: &Path) -> Result<SimulateFileConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

struct EffectiveSimulate {
    topologies: Vec<Topology>,
    base: SimConfig,
}

fn resolve_simulate(args: &SimulateArgs) -> Result<(EffectiveSimulate, serde_json::Value), CliError> {
    let file = match &args.config {
        Some(path) => load_simulate_config(path)?,
        None => SimulateFileConfig::default(),
    };
    let selection = match (&args.topology, &file.topology) {
        (Some(s), _) => s.clone(),
        (None, Some(text)) => parse_topology_selection(text).map_err(CliError::Validation)?,
        (None, None) => TopologySelection::Presets(vec![
            Topology::Chain,
            Topology::Star,
            Topology::Mesh,
        ]),
    };
    let topologies = match selection {
        TopologySelection::Presets(list) => list,
        TopologySelection::File(_) => {
            return Err(CliError::Validation(
                "file graphs are diagnose-only; simulate supports chain|star|mesh|all".into(),
            ))
        }
    };
    let defaults = SimConfig::default();
    let noise = NoiseSpec::new(
        args.sigma.or(file.sigma).unwrap_or(defaults.noise.sigma),
        args.rho_c.or(file.rho_c).unwrap_or(defaults.noise.rho_c),
        file.distribution.unwrap_or(defaults.noise.distribution),
        file.p_flip.unwrap_or(defaults.noise.p_flip),
    )
    .map_err(|e| CliError::Validation(e.to_string()))?;
    let initial = match file.initial {
        Some(s) => TaskState::new(s.value, s.parity, s.level)
            .map_err(|e| CliError::Validation(e.to_string()))?,
        None => defaults.initial,
    };
    let base = SimConfig {
        topology: Topology::Chain,
        agents: args.agents.or(file.agents).unwrap_or(defaults.agents),
        steps: args.steps.or(file.steps).unwrap_or(defaults.steps),
        trials: args.n_trials.or(file.trials).unwrap_or(defaults.trials),
        noise,
        epsilon: args.epsilon.or(file.epsilon).unwrap_or(defaults.epsilon),
        seed: args.seed.or(file.seed).unwrap_or(defaults.seed),
        initial,
        aggregator: args
            .aggregator
            .map(Aggregator::from)
            .or(file.aggregator)
            .unwrap_or(defaults.aggregator),
        gamma: args.gamma.or(file.gamma).unwrap_or(defaults.gamma),
        mesh_attenuation: file.mesh_attenuation.unwrap_or(defaults.mesh_attenuation),
    };
    base.validate().map_err(|e| CliError::Validation(e.to_string()))?;
    let config = serde_json::json!({
        "command": "simulate",
        "topologies": topologies.iter().map(|t| t.name()).collect::<Vec<_>>(),
        "k_profile": args.k_profile.label(),
        "config": serde_json::to_value(&base).expect("config serializes"),
    });
    Ok((EffectiveSimulate { topologies, base }, config))
}

/// Per-trial (E_ceg, R_cdr, F_ps) columns; R_cdr is absent for T < 2.
type MetricColumns = (Vec<f64>, Option<Vec<f64>>, Vec<f64>);

fn per_trial_metrics(batch: &TrialBatch, steps: usize) -> MetricColumns {
    let e_ceg: Vec<f64> = batch.records.iter().map(cumulative_error).collect();
    let r_cdr = (steps >= 2).then(|| {
        batch.records.iter().map(|r| consensus_decay(&r.disagreement)).collect::<Vec<f64>>()
    });
    let f_ps: Vec<f64> = batch
        .records
        .iter()
        .map(|r| {
            perturbation_sensitivity(
                *r.estimate.last().expect("nonempty trajectory"),
                r.perturbed_final.expect("twin recorded"),
            )
        })
        .collect();
    (e_ceg, r_cdr, f_ps)
}

fn spearman_or_warn(
    label: &str,
    predicted: &[f64],
    observed: &[f64],
    warnings: &mut Vec<String>,
) -> Option<f64> {
    match sim::spearman_rank(predicted, observed) {
        Ok(v) => Some(v),
        Err(_) => {
            warnings.push(format!("rank correlation unavailable for {label}: tied values"));
            None
        }
    }
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<Report, CliError> {
    let (eff, config) = resolve_simulate(args)?;
    let mut warnings = Vec::new();
    let analyses = eff
        .topologies
        .iter()
        .map(|&t| {
            analyze_preset(
                t,
                eff.base.gamma,
                eff.base.agents,
                eff.base.steps,
                args.k_profile,
                Some(eff.base.noise.rho_c),
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    let rankings = build_rankings(&analyses);
    ordering_warnings(&rankings, &analyses, &mut warnings);

    let batches: Vec<TrialBatch> = eff
        .topologies
        .iter()
        .map(|&t| sim::run_batch(&SimConfig { topology: t, ..eff.base.clone() }))
        .collect();
    let per_topology: Vec<TopologySim> = eff
        .topologies
        .iter()
        .zip(&batches)
        .map(|(&t, b)| TopologySim {
            topology: t.name().to_string(),
            summary: b.summary.clone(),
        })
        .collect();

    if eff.base.noise.sigma == 0.0 {
        warnings.push(
            "sigma = 0: every topology tracks the task exactly, so drift metrics and rank \
             statistics are degenerate"
                .to_string(),
        );
    }
    warnings.push(
        "absolute drift magnitudes scale with the configured noise model; only \
         cross-topology comparisons are meaningful"
            .to_string(),
    );

    let rank_consistency = if eff.topologies.len() >= 2 {
        let kappas: Vec<f64> = analyses.iter().map(|a| a.kappa).collect();
        let predictions: Vec<f64> = analyses.iter().map(|a| a.drift_prediction).collect();
        let metrics: Vec<MetricColumns> =
            batches.iter().map(|b| per_trial_metrics(b, eff.base.steps)).collect();
        let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
        let e_means: Vec<f64> = metrics.iter().map(|(e, _, _)| mean(e)).collect();
        let f_means: Vec<f64> = metrics.iter().map(|(_, _, f)| mean(f)).collect();
        let r_means: Option<Vec<f64>> = metrics
            .iter()
            .map(|(_, r, _)| r.as_ref().map(|v| mean(v)))
            .collect();
        let kw = |pick: &dyn Fn(&MetricColumns) -> Vec<f64>| {
            sim::kruskal_wallis(&metrics.iter().map(pick).collect::<Vec<_>>())
        };
        Some(RankConsistency {
            spearman_kappa_vs_e_ceg: spearman_or_warn(
                "kappa vs E_ceg",
                &kappas,
                &e_means,
                &mut warnings,
            ),
            spearman_kappa_vs_r_cdr: r_means.as_ref().and_then(|r| {
                spearman_or_warn("kappa vs R_cdr", &kappas, r, &mut warnings)
            }),
            spearman_kappa_vs_f_ps: spearman_or_warn(
                "kappa vs F_ps",
                &kappas,
                &f_means,
                &mut warnings,
            ),
            spearman_drift_prediction_vs_e_ceg: spearman_or_warn(
                "drift prediction vs E_ceg",
                &predictions,
                &e_means,
                &mut warnings,
            ),
            kruskal_wallis_e_ceg: kw(&|(e, _, _)| e.clone()),
            kruskal_wallis_r_cdr: r_means
                .is_some()
                .then(|| kw(&|(_, r, _)| r.clone().expect("present when means are"))),
            kruskal_wallis_f_ps: kw(&|(_, _, f)| f.clone()),
        })
    } else {
        None
    };

    Ok(Report {
        command: "simulate".to_string(),
        gamma: eff.base.gamma,
        k_profile: args.k_profile.label().to_string(),
        graphs: graph_reports(&analyses),
        rankings: Some(rankings),
        simulation: Some(SimSection {
            sigma: eff.base.noise.sigma,
            rho_c: eff.base.noise.rho_c,
            steps: eff.base.steps,
            trials: eff.base.trials,
            epsilon: eff.base.epsilon,
            aggregator: match eff.base.aggregator {
                Aggregator::Mean => "mean".to_string(),
                Aggregator::Median => "median".to_string(),
            },
            per_topology,
        }),
        rank_consistency,
        warnings,
        provenance: provenance(Some(eff.base.seed), &config),
    })
}

pub struct SweepOutput {
    pub csv: String,
    pub warnings: Vec<String>,
}

fn parse_grid(text: &str) -> Result<Vec<f64>, CliError> {
    let values: Result<Vec<f64>, _> =
        text.split(',').map(|s| s.trim().parse::<f64>()).collect();
    let values =
        values.map_err(|e| CliError::Validation(format!("grid value not numeric: {e}")))?;
    if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
        return Err(CliError::Validation("grid must be a nonempty list of finite numbers".into()));
    }
    Ok(values)
}

fn integral_grid(values: &[f64], what: &str) -> Result<Vec<usize>, CliError> {
    values
        .iter()
        .map(|&v| {
            if v.fract() == 0.0 && v >= 1.0 {
                Ok(v as usize)
            } else {
                Err(CliError::Validation(format!("{what} grid needs integers >= 1, got {v}")))
            }
        })
        .collect()
}

fn render_csv(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

fn sweep_base(args: &SweepArgs) -> Result<(Vec<Topology>, SimConfig), CliError> {
    let simulate_args = SimulateArgs {
        config: None,
        topology: args.topology.clone(),
        gamma: args.gamma,
        sigma: args.sigma,
        rho_c: args.rho_c,
        epsilon: args.epsilon,
        n_trials: args.n_trials,
        steps: args.steps,
        seed: args.seed,
        agents: args.agents,
        aggregator: args.aggregator,
        k_profile: KProfileChoice::Literal,
        out: None,
        format: Format::Json,
    };
    let (eff, _) = resolve_simulate(&simulate_args)?;
    Ok((eff.topologies, eff.base))
}

/// Calibrates the cumulative-error constant on the chain at σ = 1 over the
/// canonical horizon grid.
fn calibrated_constant(base: &SimConfig) -> f64 {
    let horizons = [4usize, 8, 12, 16, 32];
    let points: Vec<(usize, f64)> = horizons
        .iter()
        .map(|&t| {
            let mut cfg = base.clone();
            cfg.topology = Topology::Chain;
            cfg.steps = t;
            cfg.noise.sigma = 1.0;
            (t, sim::run_batch(&cfg).summary.mean_cumulative_error)
        })
        .collect();
    drift::calibrate_c(&points, 1.0, 1)
}

fn per_step_k(topology: Topology, agents: usize) -> usize {
    match topology {
        Topology::Chain => 1,
        Topology::Star | Topology::Mesh => agents,
    }
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<SweepOutput, CliError> {
    let grid = parse_grid(&args.grid)?;
    let (topologies, base) = sweep_base(args)?;
    let mut warnings = Vec::new();
    let fmt = |v: f64| format!("{v}");
    let csv = match args.parameter {
        SweepParameter::Gamma => {
            let mut rows = Vec::new();
            for &gamma in &grid {
                for &t in &topologies {
                    let a = analyze_preset(
                        t,
                        gamma,
                        base.agents,
                        base.steps,
                        KProfileChoice::Literal,
                        None,
                    )?;
                    rows.push(vec![
                        fmt(gamma),
                        a.name.clone(),
                        fmt(a.rho),
                        fmt(a.gap),
                        fmt(a.kappa),
                        fmt(a.rho_tilde_literal),
                    ]);
                }
            }
            render_csv(&["gamma", "topology", "rho", "gap", "kappa", "rho_tilde"], &rows)
        }
        SweepParameter::Sigma => {
            let mut rows = Vec::new();
            for &sigma in &grid {
                if sigma < 0.0 {
                    return Err(CliError::Validation(format!("sigma must be >= 0, got {sigma}")));
                }
                for &t in &topologies {
                    let mut cfg = SimConfig { topology: t, ..base.clone() };
                    cfg.noise.sigma = sigma;
                    let s = sim::run_batch(&cfg).summary;
                    rows.push(vec![
                        fmt(sigma),
                        t.name().to_string(),
                        fmt(s.mean_cumulative_error),
                        fmt(s.sd_cumulative_error),
                        s.mean_consensus_decay.map(fmt).unwrap_or_default(),
                        fmt(s.mean_perturbation_sensitivity),
                    ]);
                }
            }
            render_csv(
                &["sigma", "topology", "mean_e_ceg", "sd_e_ceg", "mean_r_cdr", "mean_f_ps"],
                &rows,
            )
        }
        SweepParameter::T => {
            let horizons = integral_grid(&grid, "T")?;
            let c = calibrated_constant(&base);
            let mut rows = Vec::new();
            for &steps in &horizons {
                for &t in &topologies {
                    let cfg = SimConfig { topology: t, steps, ..base.clone() };
                    let s = sim::run_batch(&cfg).summary;
                    let predicted = drift::predict_ceg(
                        base.noise.sigma,
                        per_step_k(t, base.agents),
                        steps,
                        c,
                    );
                    rows.push(vec![
                        steps.to_string(),
                        t.name().to_string(),
                        fmt(s.mean_cumulative_error),
                        fmt(s.sd_cumulative_error),
                        fmt(predicted),
                    ]);
                }
            }
            render_csv(
                &["steps", "topology", "mean_e_ceg", "sd_e_ceg", "predicted_e_ceg"],
                &rows,
            )
        }
        SweepParameter::K => {
            let counts = integral_grid(&grid, "k")?;
            let chain = sim::run_batch(&SimConfig { topology: Topology::Chain, ..base.clone() });
            let chain_mean = chain.summary.mean_cumulative_error;
            let mut rows = Vec::new();
            for &k in &counts {
                if k < 2 {
                    return Err(CliError::Validation(format!(
                        "k grid needs at least 2 leaves, got {k}"
                    )));
                }
                let cfg = SimConfig { topology: Topology::Star, agents: k, ..base.clone() };
                let star_mean = sim::run_batch(&cfg).summary.mean_cumulative_error;
                let ratio = chain_mean / star_mean;
                let predicted = drift::ratio_with_correlation(k, base.noise.rho_c);
                rows.push(vec![
                    k.to_string(),
                    fmt(chain_mean),
                    fmt(star_mean),
                    fmt(ratio),
                    fmt(predicted),
                ]);
            }
            render_csv(
                &["k", "chain_mean_e_ceg", "star_mean_e_ceg", "ratio", "predicted_ratio"],
                &rows,
            )
        }
        SweepParameter::Alpha => {
            let mut rows = Vec::new();
            for &alpha in &grid {
                let g = graph::make_malicious_star(base.agents, alpha)?;
                let sr = spectral::successor(&graph::row_normalize_gamma(&g, base.gamma)?)?;
                let mu_sq = spectral::mu_squared(base.agents, alpha);
                let bound = spectral::malicious_kappa_bound(base.agents, base.gamma, mu_sq)?;
                rows.push(vec![
                    fmt(alpha),
                    fmt(sr.kappa()),
                    fmt(bound),
                    fmt(sr.rho()),
                    fmt(sr.gap()),
                ]);
            }
            render_csv(&["alpha", "kappa", "bound", "rho", "gap"], &rows)
        }
        SweepParameter::RhoC => {
            let mut rows = Vec::new();
            let mut domain_warned = false;
            for &rho_c in &grid {
                if !(0.0..=1.0).contains(&rho_c) {
                    return Err(CliError::Validation(format!(
                        "rho_c must lie in [0, 1], got {rho_c}"
                    )));
                }
                let mut chain_cfg = SimConfig { topology: Topology::Chain, ..base.clone() };
                chain_cfg.noise.rho_c = rho_c;
                let chain_mean = sim::run_batch(&chain_cfg).summary.mean_cumulative_error;
                let mut star_cfg = SimConfig { topology: Topology::Star, ..base.clone() };
                star_cfg.noise.rho_c = rho_c;
                let star_mean = sim::run_batch(&star_cfg).summary.mean_cumulative_error;
                let ratio = chain_mean / star_mean;
                let predicted = drift::ratio_with_correlation(base.agents, rho_c);
                let inferred = match drift::infer_rho_c(ratio, base.agents) {
                    Ok(v) => fmt(v),
                    Err(_) => {
                        if !domain_warned {
                            warnings.push(format!(
                                "measured ratio {ratio:.4} falls outside [1, sqrt(k)]; no \
                                 systemic correlation is consistent with it"
                            ));
                            domain_warned = true;
                        }
                        String::new()
                    }
                };
                rows.push(vec![
                    fmt(rho_c),
                    fmt(chain_mean),
                    fmt(star_mean),
                    fmt(ratio),
                    fmt(predicted),
                    inferred,
                ]);
            }
            render_csv(
                &[
                    "rho_c",
                    "chain_mean_e_ceg",
                    "star_mean_e_ceg",
                    "ratio",
                    "predicted_ratio",
                    "inferred_rho_c",
                ],
                &rows,
            )
        }
    };
    Ok(SweepOutput { csv, warnings })
}
