use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_synth-eval"));
    c.env("SYNTH_EVAL_THREADS", "2");
    c
}

fn run(args: &[&str], cwd: &Path) -> Output {
    bin().args(args).current_dir(cwd).output().unwrap()
}

const SMALL: &str = "seed = 7\n[phantom]\ndims = [32, 32, 6]\n";

fn config(dir: &Path, extra: &str) -> String {
    let p = dir.join("cfg.toml");
    std::fs::write(&p, format!("{SMALL}{extra}")).unwrap();
    p.display().to_string()
}

#[test]
fn phantom_then_metrics_succeed() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), "");
    let out = run(&["phantom", "--config", &cfg, "--out-dir", "ph"], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(tmp.path().join("ph/phantom_report.json").exists());
    let out = run(
        &[
            "metrics",
            "--config",
            &cfg,
            "--out-dir",
            "m",
            "--reference-dir",
            "ph",
            "--synthesized-dir",
            "ph",
            "--format",
            "csv",
        ],
        tmp.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(tmp.path().join("m/metrics_rows.csv").exists());
    assert!(!tmp.path().join("m/metrics_report.json").exists());
}

#[test]
fn input_errors_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = config(tmp.path(), "[bogus]\nx = 1\n");
    assert_eq!(run(&["phantom", "--config", &bad], tmp.path()).status.code(), Some(1));
    assert_eq!(run(&["no-such-command"], tmp.path()).status.code(), Some(1));
    assert_eq!(run(&["phantom", "--format", "xml"], tmp.path()).status.code(), Some(1));
    let out = run(
        &["metrics", "--reference-dir", "nope", "--synthesized-dir", "nope"],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());
    let out = bin()
        .args(["phantom"])
        .env("SYNTH_EVAL_THREADS", "0")
        .current_dir(tmp.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn failed_gradient_checks_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), "[losses]\ninstances = 1\ntolerance = 1e-300\n");
    let out = run(&["losses", "--config", &cfg, "--out-dir", "l"], tmp.path());
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    // The report is still written.
    assert!(tmp.path().join("l/losses_report.json").exists());
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), "[robustness]\nseverities = [\"minor\", \"severe\"]\n");
    for dir in ["a", "b"] {
        let out = run(&["robustness", "--config", &cfg, "--out-dir", dir], tmp.path());
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let out = bin()
        .args(["robustness", "--config", &cfg, "--out-dir", "c"])
        .env("SYNTH_EVAL_THREADS", "1")
        .current_dir(tmp.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    for f in [
        "robustness_report.json",
        "robustness_rows.csv",
        "robustness_aggregates.csv",
    ] {
        let a = std::fs::read(tmp.path().join("a").join(f)).unwrap();
        assert_eq!(a, std::fs::read(tmp.path().join("b").join(f)).unwrap(), "{f}");
        assert_eq!(a, std::fs::read(tmp.path().join("c").join(f)).unwrap(), "{f}");
    }
}

#[test]
fn seed_flag_overrides_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), "");
    assert!(run(
        &["losses", "--config", &cfg, "--seed", "11", "--out-dir", "s"],
        tmp.path()
    )
    .status
    .success());
    let text = std::fs::read_to_string(tmp.path().join("s/losses_report.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["provenance"]["seed"], 11);
}
