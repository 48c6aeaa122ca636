//! End-to-end tests against the compiled binary.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_topospec"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout_json(out: &Output) -> serde_json::Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn write_graph(dir: &Path, gamma: Option<f64>) -> std::path::PathBuf {
    let path = dir.join("ring.json");
    let mut doc = serde_json::json!({
        "labels": ["a", "b", "c", "d"],
        "weights": [
            [1, 1, 0, 0],
            [0, 1, 1, 0],
            [0, 0, 1, 1],
            [1, 0, 0, 1]
        ],
    });
    if let Some(g) = gamma {
        doc["gamma"] = serde_json::json!(g);
    }
    std::fs::write(&path, serde_json::to_string(&doc).unwrap()).unwrap();
    path
}

#[test]
fn json_report_carries_reference_diagnostics() {
    let out = run(&["diagnose", "--format", "json"]);
    let report = stdout_json(&out);
    let graphs = report["graphs"].as_array().unwrap();
    let want = [
        ("chain", 1.00, 0.00, 9.95),
        ("star", 10.00, 9.00, 28.61),
        ("mesh", 10.00, 9.23, 13.00),
    ];
    assert_eq!(graphs.len(), 3);
    for (g, (name, rho, gap, kappa)) in graphs.iter().zip(want) {
        assert_eq!(g["name"], name);
        let d = &g["diagnostics"];
        assert!((d["rho"].as_f64().unwrap() - rho).abs() < 0.01);
        assert!((d["gap"].as_f64().unwrap() - gap).abs() < 0.01);
        assert!((d["kappa"].as_f64().unwrap() - kappa).abs() < 0.01);
    }
    assert_eq!(report["provenance"]["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn output_is_identical_across_thread_counts() {
    let args = ["simulate", "--n-trials", "20", "--seed", "11", "--format", "json"];
    let one = bin().args(args).env("TOPOSPEC_THREADS", "1").output().unwrap();
    let four = bin().args(args).env("TOPOSPEC_THREADS", "4").output().unwrap();
    assert!(one.status.success() && four.status.success());
    assert_eq!(one.stdout, four.stdout);
}

#[test]
fn exit_codes_follow_the_contract() {
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["diagnose", "--bogus"]).status.code(), Some(1));
    assert_eq!(run(&["diagnose", "--rho-c", "1.5"]).status.code(), Some(1));
    assert_eq!(run(&["diagnose", "--topology", "file:/no/such/graph.json"]).status.code(), Some(1));
    let unwritable = run(&[
        "diagnose",
        "--out",
        "/nonexistent-dir-for-sure/report.json",
    ]);
    assert_eq!(unwritable.status.code(), Some(2));
    let bad_env = bin().arg("diagnose").env("TOPOSPEC_THREADS", "zero").output().unwrap();
    assert_eq!(bad_env.status.code(), Some(1));
}

#[test]
fn graph_files_load_with_gamma_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_graph(dir.path(), Some(0.8));
    let arg = format!("file:{}", path.display());

    let from_file = stdout_json(&run(&["diagnose", "--topology", &arg, "--format", "json"]));
    assert_eq!(from_file["gamma"].as_f64().unwrap(), 0.8);
    assert_eq!(from_file["graphs"][0]["name"], "ring");
    assert_eq!(from_file["graphs"][0]["n"], 4);

    let flag_wins =
        stdout_json(&run(&["diagnose", "--topology", &arg, "--gamma", "0.5", "--format", "json"]));
    assert_eq!(flag_wins["gamma"].as_f64().unwrap(), 0.5);

    let bare = write_graph(dir.path(), None);
    let arg = format!("file:{}", bare.display());
    let default = stdout_json(&run(&["diagnose", "--topology", &arg, "--format", "json"]));
    assert_eq!(default["gamma"].as_f64().unwrap(), 0.9);
}

#[test]
fn sigma_zero_emits_degenerate_warning() {
    let out = run(&["simulate", "--sigma", "0", "--n-trials", "5", "--format", "json"]);
    let report = stdout_json(&out);
    let warnings = report["warnings"].as_array().unwrap();
    assert!(warnings.iter().any(|w| w.as_str().unwrap().starts_with("sigma = 0")));
}

#[test]
fn report_json_round_trips() {
    let out = run(&["simulate", "--n-trials", "10", "--seed", "3", "--format", "json"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let parsed: topospec_cli::report::Report = serde_json::from_str(&text).unwrap();
    assert_eq!(topospec_cli::report::to_json(&parsed), text);
}

#[test]
fn simulate_rejects_graph_files() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_graph(dir.path(), None);
    let arg = format!("file:{}", path.display());
    let out = run(&["simulate", "--topology", &arg, "--n-trials", "5"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("diagnose-only"));
}

#[test]
fn sweep_emits_expected_headers() {
    let gamma = run(&["sweep", "--parameter", "gamma", "--grid", "0.5,0.9"]);
    let text = String::from_utf8(gamma.stdout).unwrap();
    assert_eq!(text.lines().next().unwrap(), "gamma,topology,rho,gap,kappa,rho_tilde");
    assert_eq!(text.lines().count(), 1 + 2 * 3);

    let alpha = run(&["sweep", "--parameter", "alpha", "--grid", "1,2"]);
    let text = String::from_utf8(alpha.stdout).unwrap();
    assert_eq!(text.lines().next().unwrap(), "alpha,kappa,bound,rho,gap");

    let bad = run(&["sweep", "--parameter", "T", "--grid", "4,8.5"]);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn out_flag_writes_the_report_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.json");
    let out = run(&[
        "diagnose",
        "--format",
        "json",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let text = std::fs::read_to_string(&path).unwrap();
    let report: topospec_cli::report::Report = serde_json::from_str(&text).unwrap();
    assert_eq!(report.command, "diagnose");
}

#[test]
fn config_file_drives_simulation() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sim.json");
    std::fs::write(
        &cfg,
        r#"{"topology": "chain", "sigma": 2.0, "trials": 8, "steps": 5, "seed": 21}"#,
    )
    .unwrap();
    let out = run(&["simulate", "--config", cfg.to_str().unwrap(), "--format", "json"]);
    let report = stdout_json(&out);
    let sim = &report["simulation"];
    assert_eq!(sim["sigma"].as_f64().unwrap(), 2.0);
    assert_eq!(sim["trials"], 8);
    assert_eq!(sim["steps"], 5);
    assert_eq!(report["provenance"]["seed"], 21);
    assert_eq!(sim["per_topology"].as_array().unwrap().len(), 1);

    let unknown = dir.path().join("bad.json");
    std::fs::write(&unknown, r#"{"sigmas": 2.0}"#).unwrap();
    let out = run(&["simulate", "--config", unknown.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}
