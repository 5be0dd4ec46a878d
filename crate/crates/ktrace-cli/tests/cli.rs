//! End-to-end tests of the command-line interface, driving the built binary.

use std::path::Path;
use std::process::{Command, Output};

fn ktrace(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ktrace"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn generate_fit_eval_pipeline_produces_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    assert_ok(&ktrace(
        &[
            "generate", "--students", "60", "--exercises", "8", "--skills", "2", "--seed", "7",
            "--out", "gen",
        ],
        root,
    ));
    assert!(root.join("gen/synthetic.csv").exists());
    assert!(root.join("gen/ground_truth.json").exists());
    assert!(root.join("gen/run.json").exists());

    assert_ok(&ktrace(
        &[
            "fit", "--model", "bkt", "--data", "gen/synthetic.csv", "--split-seed", "11",
            "--seed", "1", "--out", "fit",
        ],
        root,
    ));
    assert_ok(&ktrace(
        &[
            "eval", "--model-file", "fit/model.json", "--data", "gen/synthetic.csv",
            "--split-seed", "11", "--name", "synth", "--out", "eval",
        ],
        root,
    ));
    let metrics: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(root.join("eval/metrics.json")).unwrap())
            .unwrap();
    assert!(metrics["report"]["auc_global"].is_number(), "{metrics}");
    assert_eq!(metrics["kind"], "metrics");
    // The flat CSV mirrors the report.
    let csv = std::fs::read_to_string(root.join("eval/metrics.csv")).unwrap();
    assert!(csv.starts_with("model,dataset,auc_global"));
    assert!(csv.lines().count() >= 2);
}

#[test]
fn compare_emits_table_with_requested_models() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    assert_ok(&ktrace(
        &[
            "generate", "--students", "50", "--exercises", "6", "--skills", "2", "--seed", "3",
            "--out", "gen",
        ],
        root,
    ));
    assert_ok(&ktrace(
        &[
            "compare", "--models", "bkt,recency", "--data", "gen/synthetic.csv", "--sweeps",
            "10", "--burn-in", "5", "--seed", "2", "--out", "cmp",
        ],
        root,
    ));
    let csv = std::fs::read_to_string(root.join("cmp/compare.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("bkt,"));
    assert!(lines[2].starts_with("recency,"));
}

#[test]
fn eval_with_mismatched_vocabulary_exits_with_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    assert_ok(&ktrace(
        &["generate", "--students", "40", "--exercises", "8", "--skills", "2", "--seed", "1",
          "--out", "gen1"],
        root,
    ));
    assert_ok(&ktrace(
        &["generate", "--students", "40", "--exercises", "12", "--skills", "2", "--seed", "2",
          "--out", "gen2"],
        root,
    ));
    assert_ok(&ktrace(
        &["fit", "--model", "bkt", "--data", "gen1/synthetic.csv", "--seed", "1", "--out", "fit"],
        root,
    ));
    let out = ktrace(
        &["eval", "--model-file", "fit/model.json", "--data", "gen2/synthetic.csv", "--out",
          "evalbad"],
        root,
    );
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.starts_with("error[validation]:"), "stderr: {stderr}");
    assert!(stderr.contains("vocabulary"), "stderr: {stderr}");
}

#[test]
fn missing_input_file_exits_with_io_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = ktrace(
        &["fit", "--model", "bkt", "--data", "nope.csv", "--out", "fit"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error[io]:"));
}

#[test]
fn inputs_are_never_mutated_and_reruns_reproduce_models() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    assert_ok(&ktrace(
        &["generate", "--students", "40", "--exercises", "6", "--skills", "2", "--seed", "5",
          "--out", "gen"],
        root,
    ));
    let before = std::fs::read(root.join("gen/synthetic.csv")).unwrap();
    for out_dir in ["fit_a", "fit_b"] {
        assert_ok(&ktrace(
            &[
                "fit", "--model", "bkt+f", "--data", "gen/synthetic.csv", "--seed", "9",
                "--threads", "1", "--out", out_dir,
            ],
            root,
        ));
    }
    let after = std::fs::read(root.join("gen/synthetic.csv")).unwrap();
    assert_eq!(before, after, "input file was modified");

    let load = |p: &str| -> serde_json::Value {
        serde_json::from_str(&std::fs::read_to_string(root.join(p)).unwrap()).unwrap()
    };
    let a = load("fit_a/model.json");
    let b = load("fit_b/model.json");
    assert_eq!(a["skill_params"], b["skill_params"], "refit changed the parameters");
    assert_eq!(a["partition"], b["partition"]);
}

#[test]
fn discover_then_fit_under_found_partition() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    assert_ok(&ktrace(
        &["generate", "--students", "50", "--exercises", "6", "--skills", "2", "--seed", "4",
          "--out", "gen"],
        root,
    ));
    assert_ok(&ktrace(
        &[
            "discover", "--model", "bkt+s", "--data", "gen/synthetic.csv", "--sweeps", "20",
            "--burn-in", "10", "--thin", "2", "--gamma", "0", "--seed", "6", "--out", "disc",
        ],
        root,
    ));
    // The chain artifact feeds back into fit as a fixed partition.
    assert_ok(&ktrace(
        &[
            "fit", "--model", "bkt", "--data", "gen/synthetic.csv", "--partition",
            "disc/model.json", "--seed", "1", "--out", "refit",
        ],
        root,
    ));
    let model: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(root.join("refit/model.json")).unwrap())
            .unwrap();
    assert_eq!(model["kind"], "bkt-model");
}

#[test]
fn analyze_commands_report_values() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    assert_ok(&ktrace(
        &["generate", "--students", "50", "--exercises", "8", "--skills", "2", "--seed", "8",
          "--out", "gen"],
        root,
    ));
    let out = ktrace(
        &["analyze", "recency", "--data", "gen/synthetic.csv", "--half-life", "5", "--out",
          "rec"],
        root,
    );
    assert_ok(&out);
    assert!(String::from_utf8_lossy(&out.stdout).contains("lambda 0.87055"));

    let out = ktrace(
        &["analyze", "ability-correlation", "--data", "gen/synthetic.csv", "--out", "ac"],
        root,
    );
    assert_ok(&out);
    assert!(String::from_utf8_lossy(&out.stdout).contains("correlation"));
}
