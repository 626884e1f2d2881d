use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use acceptance::forge::PseudoPair;

const BIN: &str = env!("CARGO_BIN_EXE_acceptance");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// A small synthetic benchmark written by the `synth` subcommand.
fn bench(dir: &Path) -> PathBuf {
    let out = run(&[
        "synth",
        "--dir",
        dir.to_str().unwrap(),
        "--clusters",
        "4",
        "--contexts-per-cluster",
        "60",
        "--test-pairs",
        "80",
        "--agreement-pairs",
        "160",
        "--pools",
        "20",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    dir.join("config.json")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn validate_accepts_a_generated_benchmark() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = bench(dir.path());
    let out = run(&["--config", s(&cfg), "validate"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["schema_version"], 1);
    assert_eq!(report["summary"]["pairs"], 80);
    assert_eq!(report["summary"]["train"]["contexts"], 240);
}

#[test]
fn truncated_matrix_exits_with_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = bench(dir.path());
    let matrix = dir.path().join("train/responses.f32bin");
    let bytes = fs::read(&matrix).unwrap();
    fs::write(&matrix, &bytes[..bytes.len() - 4]).unwrap();
    let out = run(&["--config", s(&cfg), "validate"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("truncated"), "{}", stderr(&out));
}

#[test]
fn dangling_pair_row_exits_with_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = bench(dir.path());
    let pairs = dir.path().join("pairs.ndjson");
    let text = fs::read_to_string(&pairs).unwrap();
    let broken = text.replacen("\"response_b_row\":1,", "\"response_b_row\":100000,", 1);
    assert_ne!(text, broken);
    fs::write(&pairs, broken).unwrap();
    let out = run(&["--config", s(&cfg), "validate"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("dangling"), "{}", stderr(&out));
}

#[test]
fn usage_errors_exit_64() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = bench(dir.path());
    assert_eq!(code(&run(&["--config", s(&cfg), "eval", "--methods", "oracle"])), 64);
    assert_eq!(code(&run(&["no-such-command"])), 64);
    assert_eq!(code(&run(&["eval", "--k", "many"])), 64);
    assert_eq!(code(&run(&["eval"])), 64, "missing train corpus is a usage error");
    assert_eq!(code(&run(&["--config", s(&cfg), "forge"])), 64, "forge without --out");

    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"k": 10, "neighbours": 5}"#).unwrap();
    let out = run(&["--config", s(&bad), "eval"]);
    assert_eq!(code(&out), 64);
    assert!(stderr(&out).contains("neighbours"));
}

#[test]
fn help_lists_defaults_for_every_subcommand() {
    for sub in ["validate", "eval", "bins", "sweep", "efficiency", "forge", "synth"] {
        let out = run(&[sub, "--help"]);
        assert_eq!(code(&out), 0);
        let text = String::from_utf8(out.stdout).unwrap();
        assert!(text.contains("--config") && text.contains("--threads"), "{sub}");
        if sub != "validate" {
            assert!(text.contains("[default:"), "{sub} help shows no defaults");
        }
    }
}

#[test]
fn eval_is_reproducible_and_seed_sensitive() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = bench(dir.path());
    let report = |seed: &str, threads: &str| {
        let out = run(&[
            "--config", s(&cfg), "--seed", seed, "--threads", threads, "eval", "--k", "40", "--bootstrap-n", "200",
        ]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        out.stdout
    };
    let a = report("3", "1");
    assert_eq!(a, report("3", "1"));
    assert_eq!(a, report("3", "4"));
    assert_ne!(a, report("4", "1"));

    let json: serde_json::Value = serde_json::from_slice(&a).unwrap();
    let methods: Vec<&str> = json["results"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["method"].as_str().unwrap())
        .collect();
    assert_eq!(methods, ["random", "knn_majority", "global_density", "local_density"]);
    assert_eq!(json["config"]["seed"], 3);
}

#[test]
fn flags_override_config_values() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = bench(dir.path());
    let out = run(&["--config", s(&cfg), "eval", "--methods", "local", "--k", "7", "--strict", "--bootstrap-n", "50"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(json["config"]["k"], 7);
    assert_eq!(json["config"]["tie_mode"], "strict");
    assert_eq!(json["results"].as_array().unwrap().len(), 1);
}

#[test]
fn forge_writes_pseudo_pairs_and_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = bench(dir.path());
    let pairs_path = dir.path().join("pseudo_pairs.ndjson");
    let diag = dir.path().join("diag.json");
    let out = run(&[
        "--config", s(&cfg), "--out", s(&pairs_path), "forge", "--k", "40", "--diagnostics", s(&diag),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let pairs = acceptance::forge::read_pseudo_pairs(&pairs_path).unwrap();
    // 20 mixed, 4 in-cluster and 4 displaced pools
    assert_eq!(pairs.len(), 28);
    assert!(pairs.iter().all(|p: &PseudoPair| p.gap >= 0.0));
    let diag: serde_json::Value = serde_json::from_str(&fs::read_to_string(&diag).unwrap()).unwrap();
    assert_eq!(diag["pools"].as_array().unwrap().len(), 28);

    let adjacent = dir.path().join("adjacent.ndjson");
    let out = run(&["--config", s(&cfg), "--out", s(&adjacent), "forge", "--k", "40", "--mode", "adjacent"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(acceptance::forge::read_pseudo_pairs(&adjacent).unwrap().len(), 28 * 5);
}

#[test]
fn sweep_bins_and_efficiency_write_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = bench(dir.path());
    let sweep_csv = dir.path().join("sweep.csv");
    let out = run(&["--config", s(&cfg), "sweep", "--k-values", "10,20,40", "--csv", s(&sweep_csv)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = fs::read_to_string(&sweep_csv).unwrap();
    assert!(text.starts_with("community,k,accuracy,delta\n"));
    // 4 communities x 3 k values
    assert_eq!(text.lines().count(), 1 + 4 * 3);

    let bins_csv = dir.path().join("bins.csv");
    let agree = dir.path().join("agreement");
    let out = run(&[
        "--config", s(&cfg), "bins", "--test", s(&agree), "--pairs", s(&agree.join("pairs.ndjson")), "--k", "40",
        "--bins", "4", "--permutations", "500", "--csv", s(&bins_csv),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(json["pooled"]["bins"].as_array().unwrap().len(), 4);
    assert!(fs::read_to_string(&bins_csv).unwrap().starts_with("scope,bin,median_score_ratio,accuracy,n\n"));

    let eff_csv = dir.path().join("eff.csv");
    let out = run(&["--config", s(&cfg), "efficiency", "--k", "20", "--sizes", "60,120,240", "--csv", s(&eff_csv)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(json["curve"].as_array().unwrap().len(), 3);
    assert!(json["ausc"].as_f64().unwrap() <= 1.0);
    assert_eq!(fs::read_to_string(&eff_csv).unwrap().lines().count(), 4);
}

#[test]
fn bins_without_score_ratio_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = bench(dir.path());
    let out = run(&["--config", s(&cfg), "bins", "--k", "20", "--permutations", "10"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("score_ratio"));
}
