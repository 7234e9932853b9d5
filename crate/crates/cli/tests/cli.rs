//! End-to-end checks of the `plansteer` binary: every subcommand runs
//! against real files in a scratch directory, and the failure paths exit
//! nonzero with a usable message.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use tempfile::TempDir;

struct Output {
    status: std::process::ExitStatus,
    stdout: String,
    stderr: String,
}

fn plansteer(dir: &Path, args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_plansteer"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs");
    Output {
        status: out.status,
        stdout: String::from_utf8(out.stdout).expect("utf-8 stdout"),
        stderr: String::from_utf8(out.stderr).expect("utf-8 stderr"),
    }
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = plansteer(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed\nstdout: {}\nstderr: {}",
        out.stdout,
        out.stderr
    );
    out
}

fn err(dir: &Path, args: &[&str]) -> Output {
    let out = plansteer(dir, args);
    assert!(
        !out.status.success(),
        "{args:?} unexpectedly succeeded\nstdout: {}",
        out.stdout
    );
    out
}

fn line_count(path: &PathBuf) -> usize {
    fs::read_to_string(path).unwrap().lines().count()
}

#[test]
fn toolchain_runs_end_to_end() {
    let scratch = TempDir::new().unwrap();
    let dir = scratch.path();

    // Workload generation is deterministic in the seed.
    ok(dir, &["gen-workload", "--seed", "56", "--queries", "60", "--out", "w.jsonl"]);
    ok(dir, &["gen-workload", "--seed", "56", "--queries", "60", "--out", "w2.jsonl"]);
    assert_eq!(
        fs::read_to_string(dir.join("w.jsonl")).unwrap(),
        fs::read_to_string(dir.join("w2.jsonl")).unwrap()
    );
    assert_eq!(line_count(&dir.join("w.jsonl")), 61);

    // Offline store building prints the frequency table and writes one
    // triple per query.
    let out = ok(dir, &["build-store", "--workload", "w.jsonl", "--out", "store.jsonl"]);
    assert!(out.stdout.contains("hint_set"), "missing table header: {}", out.stdout);
    assert!(out.stdout.contains("60 triples"), "missing count: {}", out.stdout);
    assert_eq!(line_count(&dir.join("store.jsonl")), 60);

    // Mapping a workload query by id prints the decision.
    let first_id = first_query_id(&dir.join("w.jsonl"));
    let out = ok(
        dir,
        &["map", "--workload", "w.jsonl", "--store", "store.jsonl", "--query-id", &first_id],
    );
    for needle in ["candidate:", "votes:", "mean default ms:", "mean candidate ms:", "accepted:"] {
        assert!(out.stdout.contains(needle), "missing {needle:?} in: {}", out.stdout);
    }

    // Mapping a plan file works too.
    let plan = format!(
        r#"{{"query_id":"{first_id}","plan":{{"op":"HashJoin","children":[{{"op":"SeqScan","relation":"orders"}},{{"op":"IndexScan","relation":"customers"}}]}}}}"#
    );
    fs::write(dir.join("probe.json"), plan).unwrap();
    ok(dir, &["map", "--workload", "w.jsonl", "--store", "store.jsonl", "--plan", "probe.json"]);

    // An empty store is an error, not a silent no-op.
    fs::write(dir.join("empty.jsonl"), "").unwrap();
    let out = err(
        dir,
        &["map", "--workload", "w.jsonl", "--store", "empty.jsonl", "--query-id", &first_id],
    );
    assert!(out.stderr.contains("empty"), "unexpected stderr: {}", out.stderr);

    // Map-only runs report but never touch the store file.
    let before = fs::read_to_string(dir.join("store.jsonl")).unwrap();
    let out = ok(
        dir,
        &[
            "run", "--workload", "w.jsonl", "--store", "store.jsonl", "--mode", "map-only",
            "--report", "report.jsonl",
        ],
    );
    assert!(out.stdout.contains("fast path:"));
    assert_eq!(fs::read_to_string(dir.join("store.jsonl")).unwrap(), before);
    // One record per query plus the trailing summary.
    assert_eq!(line_count(&dir.join("report.jsonl")), 61);
    let last = fs::read_to_string(dir.join("report.jsonl")).unwrap();
    assert!(last.lines().last().unwrap().contains("run_summary"));

    // Full runs persist the store they grew.
    ok(
        dir,
        &["run", "--workload", "w.jsonl", "--store", "grown.jsonl", "--mode", "full"],
    );
    assert!(line_count(&dir.join("grown.jsonl")) > 0);

    // Cross-validation writes all four report files.
    let out = ok(
        dir,
        &["crossval", "--workload", "w.jsonl", "--folds", "5", "--report-dir", "reports"],
    );
    assert!(out.stdout.contains("total_speedup_pct"));
    assert!(out.stdout.contains("timeout threshold:"));
    for file in ["folds.csv", "bands.csv", "outcomes.csv", "summary.json"] {
        assert!(dir.join("reports").join(file).exists(), "missing {file}");
    }
    assert_eq!(line_count(&dir.join("reports/folds.csv")), 6);
    assert_eq!(line_count(&dir.join("reports/outcomes.csv")), 61);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("reports/summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary.as_object().unwrap().len(), 8);

    // The ablation grid prints all four variants over one threshold.
    let out = ok(dir, &["ablate", "--workload", "w.jsonl", "--folds", "5"]);
    for needle in ["levenshtein", "embedding", "timeout threshold:"] {
        assert!(out.stdout.contains(needle), "missing {needle:?} in: {}", out.stdout);
    }

    // PCA export covers every stored triple.
    ok(dir, &["pca", "--store", "store.jsonl", "--out", "pca.csv"]);
    assert_eq!(line_count(&dir.join("pca.csv")), 61);
    assert!(fs::read_to_string(dir.join("pca.csv"))
        .unwrap()
        .starts_with("query_id,template_label,pc1,pc2"));
}

fn first_query_id(workload: &PathBuf) -> String {
    let text = fs::read_to_string(workload).unwrap();
    let line = text.lines().nth(1).expect("at least one query line");
    let doc: serde_json::Value = serde_json::from_str(line).unwrap();
    doc["query_id"].as_str().unwrap().to_string()
}

#[test]
fn corrupt_inputs_fail_with_line_numbers() {
    let scratch = TempDir::new().unwrap();
    let dir = scratch.path();
    ok(dir, &["gen-workload", "--seed", "3", "--queries", "40", "--out", "w.jsonl"]);
    ok(dir, &["build-store", "--workload", "w.jsonl", "--out", "store.jsonl"]);

    let mut store = fs::read_to_string(dir.join("store.jsonl")).unwrap();
    let keep: Vec<&str> = store.lines().take(2).collect();
    store = format!("{}\n{}\nnot a record\n", keep[0], keep[1]);
    fs::write(dir.join("store.jsonl"), store).unwrap();

    let out = err(dir, &["pca", "--store", "store.jsonl"]);
    assert!(out.stderr.contains("line 3"), "unexpected stderr: {}", out.stderr);
}

#[test]
fn pca_requires_three_triples() {
    let scratch = TempDir::new().unwrap();
    let dir = scratch.path();
    ok(dir, &["gen-workload", "--seed", "3", "--queries", "40", "--out", "w.jsonl"]);
    ok(dir, &["build-store", "--workload", "w.jsonl", "--out", "store.jsonl"]);
    let store = fs::read_to_string(dir.join("store.jsonl")).unwrap();
    let two: Vec<&str> = store.lines().take(2).collect();
    fs::write(dir.join("tiny.jsonl"), format!("{}\n{}\n", two[0], two[1])).unwrap();

    let out = err(dir, &["pca", "--store", "tiny.jsonl"]);
    assert!(out.stderr.contains("at least 3"), "unexpected stderr: {}", out.stderr);
}
