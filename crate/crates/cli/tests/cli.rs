use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_insightlens"))
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run_in(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}\n{}",
        String::from_utf8_lossy(&out.stderr),
        String::from_utf8_lossy(&out.stdout)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn json(path: impl AsRef<Path>) -> Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

/// simulate -> ingest, the common prefix of most tests.
fn cohort(dir: &Path, participants: &str) {
    ok(dir, &["simulate", "--participants", participants, "--seed", "7", "--out-dir", "raw"]);
    ok(dir, &["ingest", "--events", "raw/events.jsonl", "--out", "events.jsonl", "--summary", "summary.json"]);
}

#[test]
fn default_pipeline_produces_an_evaluation_report() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    ok(dir, &["simulate", "--out-dir", "raw"]);
    ok(dir, &["ingest", "--events", "raw/events.jsonl", "--out", "events.jsonl"]);
    ok(dir, &["mine-patterns", "--events", "events.jsonl", "--out", "patterns.json"]);
    ok(
        dir,
        &[
            "train", "--events", "events.jsonl", "--notes", "raw/notes.jsonl", "--out", "model.json", "--split-out",
            "split.json",
        ],
    );
    let stdout = ok(
        dir,
        &[
            "evaluate", "--model", "model.json", "--split", "split.json", "--events", "events.jsonl", "--notes",
            "raw/notes.jsonl", "--out", "report.json",
        ],
    );
    assert!(stdout.contains("kappa"), "{stdout}");

    let patterns = json(dir.join("patterns.json"));
    assert_eq!(patterns["participants"], 158);
    assert_eq!(patterns["thresholds"]["candidate_min_exclusive"], 39);
    let model = json(dir.join("model.json"));
    assert_eq!(model["model"]["trees"].as_array().unwrap().len(), 500);
    assert_eq!(model["target"], "category");
    assert_eq!(model["feature_kind"], "actions");
    let report = json(dir.join("report.json"));
    assert_eq!(report["schema_version"], 1);
    assert!(report["n_test"].as_u64().unwrap() > 0);
    let kappa = report["kappa"]["value"].as_f64().unwrap();
    assert!((-1.0..=1.0).contains(&kappa));
    assert!(report["kappa_band"].is_string());

    // Participants never straddle the split.
    let split = json(dir.join("split.json"));
    let owner = |id: &Value| id.as_str().unwrap().split('-').next().unwrap().to_owned();
    let train: std::collections::BTreeSet<String> = split["train"].as_array().unwrap().iter().map(owner).collect();
    assert!(split["test"].as_array().unwrap().iter().all(|id| !train.contains(&owner(id))));
}

#[test]
fn usage_errors_exit_2_and_name_the_flag() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let out = run_in(dir, &["mine-patterns", "--events", "missing.jsonl", "--out", "p.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--events"));

    let out = run_in(dir, &["ingest", "--out", "e.jsonl"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--events"));

    let out = run_in(dir, &["train", "--out", "m.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--events"));

    let out = run_in(dir, &["stats", "--aggregates", "nope.csv", "--out", "s.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--aggregates"));

    let out = run_in(dir, &["mine-patterns", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!dir.join("p.json").exists());
}

#[test]
fn threshold_misconfiguration_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    cohort(dir, "6");
    let out = run_in(dir, &["mine-patterns", "--events", "events.jsonl", "--t1", "0.1", "--t2", "0.3", "--out", "p.json"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run_in(dir, &["mine-patterns", "--events", "events.jsonl", "--min-len", "5", "--max-len", "3", "--out", "p.json"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn evaluate_without_a_model_reports_no_model_loaded() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    for args in [
        &["evaluate", "--split", "split.json", "--out", "r.json"][..],
        &["evaluate", "--model", "absent.json", "--split", "split.json", "--out", "r.json"][..],
    ] {
        let out = run_in(dir, args);
        assert_eq!(out.status.code(), Some(1), "{args:?}");
        assert!(String::from_utf8_lossy(&out.stderr).contains("no-model-loaded"));
    }
}

#[test]
fn data_errors_exit_1() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fs::write(dir.join("bad.jsonl"), "{\"v\":1,\"ts\":1,\"participant\":\"p\",\"session\":\"s\",\"action\":\"teleport\"}\n")
        .unwrap();
    let out = run_in(dir, &["ingest", "--events", "bad.jsonl", "--out", "e.jsonl"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("teleport"));
    assert!(!dir.join("e.jsonl").exists(), "no artifact on failure");

    fs::write(dir.join("model.json"), "{}").unwrap();
    fs::write(dir.join("split.json"), "{}").unwrap();
    let out = run_in(dir, &["evaluate", "--model", "model.json", "--split", "split.json", "--out", "r.json"]);
    assert_eq!(out.status.code(), Some(1));
}

/// Every artifact of a subcommand chain, by relative path.
fn artifacts(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push((path.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn full_chain(dir: &Path) {
    cohort(dir, "24");
    ok(dir, &["mine-patterns", "--events", "events.jsonl", "--out", "patterns.json"]);
    ok(
        dir,
        &[
            "build-features", "--events", "events.jsonl", "--notes", "raw/notes.jsonl", "--features", "patterns",
            "--patterns", "patterns.json", "--target", "overview_detail", "--out", "features.csv",
            "--aggregates-out", "aggregates.csv",
        ],
    );
    ok(
        dir,
        &[
            "train", "--table", "features.csv", "--target", "overview_detail", "--n-trees", "60", "--seed", "3",
            "--out", "model.json", "--split-out", "split.json",
        ],
    );
    ok(
        dir,
        &["evaluate", "--model", "model.json", "--split", "split.json", "--table", "features.csv", "--out", "report.json"],
    );
    ok(
        dir,
        &[
            "explain", "--model", "model.json", "--split", "split.json", "--table", "features.csv", "--mode", "sampled",
            "--permutations", "50", "--background", "20", "--max-instances", "5", "--out", "explain.json",
            "--scatter-out", "scatter.json",
        ],
    );
    ok(
        dir,
        &[
            "train", "--events", "events.jsonl", "--notes", "raw/notes.jsonl", "--features", "references",
            "--model-kind", "linear", "--out", "linear.json",
        ],
    );
    ok(dir, &["stats", "--aggregates", "aggregates.csv", "--bootstrap", "200", "--out", "stats.json"]);
}

#[test]
fn reruns_are_byte_identical_and_leave_no_temporaries() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    full_chain(a.path());
    full_chain(b.path());
    let (left, right) = (artifacts(a.path()), artifacts(b.path()));
    let names: Vec<_> = left.iter().map(|(p, _)| p.display().to_string()).collect();
    assert_eq!(names.len(), 15, "{names:?}");
    assert!(names.iter().all(|n| !n.contains(".insightlens-")), "{names:?}");
    for ((p, x), (_, y)) in left.iter().zip(&right) {
        assert!(x == y, "{} differs between runs", p.display());
    }
    let explain = json(a.path().join("explain.json"));
    assert_eq!(explain["n_instances"], 5);
    assert_eq!(explain["top"].as_array().unwrap().len(), 10);
    let scatter = json(a.path().join("scatter.json"));
    let d = json(a.path().join("model.json"))["model"]["features"].as_array().unwrap().len();
    assert_eq!(scatter["points"].as_array().unwrap().len(), 5 * d);
}

#[test]
fn config_file_supplies_values_and_flags_override_it() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    cohort(dir, "12");
    fs::write(
        dir.join("run.toml"),
        "[mine-patterns]\nevents = \"events.jsonl\"\nt1 = 0.5\nt2 = 0.4\nmax-len = 4\nout = \"from-config.json\"\n",
    )
    .unwrap();
    ok(dir, &["--config", "run.toml", "mine-patterns"]);
    let cfg = &json(dir.join("from-config.json"))["config"];
    assert_eq!(cfg["t1_fraction"], 0.5);
    assert_eq!(cfg["t2_fraction"], 0.4);
    assert_eq!(cfg["max_len"], 4);
    assert_eq!(cfg["min_len"], 2, "unset keys fall back to defaults");

    ok(dir, &["mine-patterns", "--config", "run.toml", "--t2", "0.3", "--out", "from-flags.json"]);
    let cfg = &json(dir.join("from-flags.json"))["config"];
    assert_eq!(cfg["t1_fraction"], 0.5);
    assert_eq!(cfg["t2_fraction"], 0.3);

    fs::write(dir.join("typo.toml"), "[mine-patterns]\nt3 = 0.1\n").unwrap();
    let out = run_in(dir, &["--config", "typo.toml", "mine-patterns"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("t3"));

    let out = run_in(dir, &["--config", "absent.toml", "mine-patterns"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn help_lists_the_defaults() {
    let help = |sub: &str| {
        let out = bin().args([sub, "--help"]).output().unwrap();
        assert!(out.status.success());
        String::from_utf8(out.stdout).unwrap()
    };
    let mine = help("mine-patterns");
    for needle in ["[default: 0.25]", "[default: 0.20]", "[default: 2]", "[default: 10]"] {
        assert!(mine.contains(needle), "mine-patterns help lacks {needle}");
    }
    let ingest = help("ingest");
    assert!(ingest.contains("[default: 3000]") && ingest.contains("[default: 360000"));
    assert!(help("simulate").contains("[default: 158]"));
    let train = help("train");
    assert!(train.contains("[default: 500]") && train.contains("[default: 0.8]"));
    assert!(help("stats").contains("[default: 2000]"));
    assert!(help("explain").contains("[default: 2000]"));
}

#[test]
fn serve_rejects_missing_inputs_before_binding() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let out = run_in(dir, &["serve", "--data-dir", "state", "--model", "absent.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--model"));
    let out = run_in(dir, &["serve"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--data-dir"));
}
