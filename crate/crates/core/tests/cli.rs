use std::path::Path;
use std::process::{Command, Output};

use peerfx::config::RunConfig;
use tempfile::TempDir;

const SMALL: &str = r#"{
  "dgp": {"n_providers": 14, "n_nonparticipants": 10000},
  "validity": {"n_sims": 20}
}"#;

fn peerfx(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_peerfx"))
        .arg("--config")
        .arg(dir.join("config.json"))
        .arg("--out")
        .arg(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn workspace(config: &str) -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("config.json"), config).unwrap();
    dir
}

fn ok(out: &Output) {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

fn read(dir: &Path, file: &str) -> Vec<u8> {
    std::fs::read(dir.join(file)).unwrap_or_else(|e| panic!("{file}: {e}"))
}

#[test]
fn synth_is_byte_identical_across_runs() {
    let a = workspace(SMALL);
    let b = workspace(SMALL);
    ok(&peerfx(a.path(), &["synth"]));
    ok(&peerfx(b.path(), &["synth"]));
    for f in ["persons.csv", "courses.csv", "ground_truth.json", "manifest_synth.json"] {
        assert_eq!(read(a.path(), f), read(b.path(), f), "{f}");
    }
}

#[test]
fn missing_output_directory_is_a_usage_error() {
    let dir = workspace(SMALL);
    let out = Command::new(env!("CARGO_BIN_EXE_peerfx"))
        .args(["--out", dir.path().join("nope").to_str().unwrap(), "synth"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn bad_flags_and_configs_exit_with_one() {
    let dir = workspace(r#"{"validity": {"n_sims": 1}}"#);
    assert_eq!(peerfx(dir.path(), &["synth"]).status.code(), Some(1));
    let dir = workspace(SMALL);
    assert_eq!(peerfx(dir.path(), &["--frobnicate"]).status.code(), Some(1));
    assert_eq!(peerfx(dir.path(), &["estimate", "--spec", "no_such_spec"]).status.code(), Some(1));
}

#[test]
fn stages_compose_through_files() {
    let dir = workspace(SMALL);
    let d = dir.path();
    ok(&peerfx(d, &["synth"]));
    ok(&peerfx(d, &["score"]));

    let balance = String::from_utf8(read(d, "balance.csv")).unwrap();
    assert!(balance.starts_with("covariate,mean_p,mean_np,diff,sb\n"));

    let (_, persons) = peerfx::io::read_persons(&d.join("persons_scored.csv")).unwrap();
    let scores: Vec<f64> = persons.iter().filter(|p| p.is_participant()).map(|p| p.employability.unwrap()).collect();
    assert!(!scores.is_empty() && scores.iter().all(|s| *s > 0.0 && *s < 1.0));

    ok(&peerfx(d, &["estimate", "--spec", "linear_in_means", "--outcome", "emp_days_60"]));
    for t in ["short", "long", "retraining"] {
        assert!(d.join(format!("effects_linear_in_means_{t}_emp_days_60.csv")).is_file());
    }
    let report: serde_json::Value = serde_json::from_slice(&read(d, "report.json")).unwrap();
    assert_eq!(report["reports"].as_array().unwrap().len(), 3);

    let mut cfg = RunConfig::load(&d.join("config.json")).unwrap();
    cfg.estimation.specs = vec![peerfx::suite::SpecName::LinearInMeans];
    cfg.estimation.outcomes = vec!["emp_days_60".into()];
    assert_eq!(report["meta"]["config_hash"], cfg.hash());

    ok(&peerfx(d, &["validate", "--n-sims", "13"]));
    let v: serde_json::Value = serde_json::from_slice(&read(d, "validity_resampling.json")).unwrap();
    for r in v["reports"].as_array().unwrap() {
        assert_eq!(r["n_sims"], 13);
        assert!(r["z_net"].as_f64().unwrap().is_finite());
    }
    assert!(d.join("sorting_diagnostics.csv").is_file());
    assert!(d.join("variance_decomposition.csv").is_file());
}

#[test]
fn every_stage_is_identical_across_worker_counts() {
    let a = workspace(SMALL);
    let b = workspace(SMALL);
    ok(&peerfx(a.path(), &["--jobs", "1", "run"]));
    ok(&peerfx(b.path(), &["--jobs", "4", "run"]));
    let mut names: Vec<String> = std::fs::read_dir(a.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    assert!(names.len() > 15);
    for f in &names {
        assert_eq!(read(a.path(), f), read(b.path(), f), "{f}");
    }
}

#[test]
fn corrupted_ground_truth_fails_acceptance() {
    let dir = workspace(SMALL);
    std::fs::write(dir.path().join("gt.json"), "{\"theta\": ").unwrap();
    let out = peerfx(dir.path(), &["accept", "--only", "1", "--reps", "5", "--ground-truth", "gt.json"]);
    assert_ne!(out.status.code(), Some(0));
    let gt = dir.path().join("gt.json");
    let out = peerfx(dir.path(), &["accept", "--only", "1", "--reps", "5", "--ground-truth", gt.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn perturbed_theta_fails_recovery() {
    let dir = workspace(SMALL);
    let d = dir.path();
    ok(&peerfx(d, &["synth"]));
    let mut gt: serde_json::Value = serde_json::from_slice(&read(d, "ground_truth.json")).unwrap();
    gt["theta"] = serde_json::json!(gt["theta"].as_f64().unwrap() * 3.0);
    std::fs::write(d.join("perturbed.json"), gt.to_string()).unwrap();
    let out = peerfx(d, &["accept", "--only", "1", "--reps", "20", "--ground-truth", d.join("perturbed.json").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(String::from_utf8_lossy(&out.stdout).contains("[FAIL]  1"));
}

#[test]
fn shipped_configs_load_and_validate() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for f in ["small.json", "engineered_sorting.json"] {
        let cfg = RunConfig::load(&dir.join(f)).unwrap_or_else(|e| panic!("{f}: {e}"));
        cfg.validate().unwrap();
    }
    let sorted = RunConfig::load(&dir.join("engineered_sorting.json")).unwrap();
    assert_eq!(sorted.dgp_config().sorting_strength, peerfx::synth::DgpConfig::engineered_sorting().sorting_strength);
}
