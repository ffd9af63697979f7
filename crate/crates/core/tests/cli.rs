mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::*;
use serde::Deserialize;

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ci-forge")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[derive(Deserialize)]
struct Expected {
    gold: String,
    pred: String,
    gold_norm: String,
    pred_norms: Vec<String>,
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

#[test]
fn evaluate_fixture_matches_hand_count() {
    let dir = tempfile::tempdir().unwrap();
    let (gold, pred) = (fixture("eval/gold.jsonl"), fixture("eval/transcripts.jsonl"));
    let out = cli(&["--out", s(dir.path()), "evaluate", "--task", "compliance", "--gold", s(&gold), "--pred", s(&pred)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    let rows: Vec<Expected> = serde_json::from_str(&read("eval/expected.json")).unwrap();
    let per_class: Vec<f64> = ["Permit", "Forbid"]
        .iter()
        .map(|label| {
            let tp = rows.iter().filter(|r| r.gold == *label && r.pred == *label).count() as f64;
            let predicted = rows.iter().filter(|r| r.pred == *label).count() as f64;
            let support = rows.iter().filter(|r| r.gold == *label).count() as f64;
            f1(100.0 * tp / predicted, 100.0 * tp / support)
        })
        .collect();
    let want = (per_class[0] + per_class[1]) / 2.0;
    let hits = rows.iter().filter(|r| r.pred_norms.contains(&r.gold_norm)).count() as f64;

    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert!((report["macro_f1"].as_f64().unwrap() - want).abs() < 1e-9);
    assert!((report["norm_retrieval_accuracy"].as_f64().unwrap() - 100.0 * hits / rows.len() as f64).abs() < 1e-9);
    assert_eq!(report["unknown"], rows.iter().filter(|r| r.pred == "Unknown").count());
    let table = String::from_utf8(out.stdout).unwrap();
    assert!(table.contains("73.86"), "{table}");
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(code(&cli(&["bogus"])), 2);
    assert_eq!(code(&cli(&["evaluate", "--task", "nonsense", "--gold", "a", "--pred", "b"])), 2);
    let dir = tempfile::tempdir().unwrap();
    let out = cli(&["--out", s(dir.path()), "synthesize", "--mode", "replay"]);
    assert_eq!(code(&out), 2);
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.starts_with("error: ") && err.trim_end().lines().count() == 1, "{err}");
    let missing = dir.path().join("nope.jsonl");
    assert_eq!(code(&cli(&["--out", s(dir.path()), "classify-norms", "--cassette", s(&missing)])), 2);
    assert_eq!(code(&cli(&["--config", s(&missing), "extract-norms"])), 2);
}

#[test]
fn runtime_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    // no statute graph in an empty output directory
    assert_eq!(code(&cli(&["--out", s(dir.path()), "extract-norms"])), 1);
    let gold = fixture("eval/gold.jsonl");
    let short = dir.path().join("short.jsonl");
    std::fs::write(&short, "{\"case_id\": 0, \"transcript\": \"Permit\"}\n").unwrap();
    let out = cli(&["--out", s(dir.path()), "evaluate", "--task", "compliance", "--gold", s(&gold), "--pred", s(&short)]);
    assert_eq!(code(&out), 1);
}

const STAGES: [&[&str]; 7] = [
    &["ingest-statute"],
    &["extract-norms"],
    &["classify-norms"],
    &["synthesize"],
    &["ingest-cap"],
    &["assemble"],
    &["compile", "--task", "compliance"],
];

fn run_all(out: &Path) {
    let config = fixture("pipeline.json");
    for stage in STAGES {
        let mut args = vec!["--config", s(&config), "--out", s(out)];
        args.extend_from_slice(stage);
        let o = cli(&args);
        assert_eq!(code(&o), 0, "{stage:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    run_all(dir.path());
    let first = snapshot_dir(dir.path());
    for name in ["synthesize.manifest.json", "assemble.manifest.json", "dataset/compliance_test.jsonl", "compliance_multi_step.jsonl"] {
        assert!(first.contains_key(name), "{name} missing");
    }
    run_all(dir.path());
    assert_eq!(first, snapshot_dir(dir.path()));
}

#[test]
fn manifests_record_inputs_and_counts() {
    let dir = tempfile::tempdir().unwrap();
    run_all(dir.path());
    let m: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("classify-norms.manifest.json")).unwrap()).unwrap();
    assert_eq!(m["subcommand"], "classify-norms");
    assert_eq!(m["counts"]["seeds"], 12);
    assert_eq!(m["counts"]["permit_seeds"], 9);
    let inputs = m["inputs"].as_object().unwrap();
    assert_eq!(inputs.keys().collect::<Vec<_>>(), ["norms.jsonl"]);
    let digest = inputs["norms.jsonl"].as_str().unwrap();
    assert_eq!(digest.len(), 64);

    let cap: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("ingest-cap.manifest.json")).unwrap()).unwrap();
    let c = &cap["counts"];
    assert_eq!((c["applicable"].as_u64(), c["irrelevant"].as_u64(), c["unlabeled"].as_u64()), (Some(4), Some(5), Some(1)));
    // overrides cleared every flag except the unlabeled case's
    assert_eq!(c["flagged"], 1);
    assert_eq!(c["queries"]["relevant"]["length_kept"], 6);
    assert_eq!(c["queries"]["irrelevant"]["length_kept"], 5);
}

#[test]
fn ablation_flags_change_the_synthesis_config() {
    let dir = tempfile::tempdir().unwrap();
    run_all(dir.path());
    let config = fixture("pipeline.json");
    let out = dir.path().join("ablate");
    std::fs::create_dir_all(&out).unwrap();
    std::fs::copy(dir.path().join("seed_norms.jsonl"), out.join("seed_norms.jsonl")).unwrap();
    let o = cli(&["--config", s(&config), "--out", s(&out), "synthesize", "--no-diversity", "--seed", "3"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("synthesis_report.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["diversity"], false);
    assert_eq!(report["config"]["seed"], 3);
    // the same survivors; only the pick may differ
    let pool = |d: &Path| std::fs::read_to_string(d.join("candidate_pool.jsonl")).unwrap();
    assert_eq!(pool(dir.path()), pool(&out));
}

#[test]
fn compare_reports_between_runs() {
    let dir = tempfile::tempdir().unwrap();
    let (gold, pred) = (fixture("eval/gold.jsonl"), fixture("eval/transcripts.jsonl"));
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let o = cli(&["--out", s(&a), "evaluate", "--task", "compliance", "--gold", s(&gold), "--pred", s(&pred)]);
    assert_eq!(code(&o), 0);
    let o = cli(&["--out", s(&b), "evaluate", "--task", "compliance", "--gold", s(&gold), "--pred", s(&pred), "--retrieval", "prefix"]);
    assert_eq!(code(&o), 0);
    let o = cli(&["--out", s(dir.path()), "compare", s(&a.join("report.json")), s(&b.join("report.json"))]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let table: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("comparison.json")).unwrap()).unwrap();
    let retrieval = table["rows"].as_array().unwrap().iter().find(|r| r["metric"] == "Retrieval").unwrap();
    assert!((retrieval["delta"].as_f64().unwrap() + 10.0).abs() < 1e-9);
}
