use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_fractalconfig"));
    cmd.env_remove("FRACTALCONFIG_CACHE");
    cmd
}

fn run(args: &[&str], out: &Path) -> Output {
    bin()
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn report(out: &Path) -> Value {
    let text = std::fs::read_to_string(out.join("report.json")).expect("report written");
    serde_json::from_str(&text).expect("report is JSON")
}

fn build_measure(dir: &Path, args: &[&str]) -> std::path::PathBuf {
    let mut full = vec!["measure.build"];
    full.extend_from_slice(args);
    let o = run(&full, dir);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    dir.join("measure.fcm")
}

#[test]
fn measure_build_is_byte_identical_across_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let args = [
        "--set",
        "n=2",
        "--set",
        "branching=4",
        "--set",
        "keep=7",
        "--set",
        "generations=3",
        "--seed",
        "5",
    ];
    let a = build_measure(&tmp.path().join("a"), &args);
    let b = build_measure(&tmp.path().join("b"), &args);
    assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
    let ra = std::fs::read(tmp.path().join("a/report.json")).unwrap();
    let rb = std::fs::read(tmp.path().join("b/report.json")).unwrap();
    assert_eq!(ra, rb);
    let r = report(&tmp.path().join("a"));
    assert_eq!(r["status"], "ok");
    assert_eq!(r["config"]["seed"], 5);
    assert_eq!(r["results"]["n"], 2);
}

#[test]
fn config_file_replays_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    let first = tmp.path().join("first");
    build_measure(&first, &["--set", "kind=\"uniform\"", "--set", "res=16"]);
    let config = report(&first)["config"].clone();
    let path = tmp.path().join("replay.json");
    std::fs::write(&path, config.to_string()).unwrap();
    let second = tmp.path().join("second");
    let o = run(&["--config", path.to_str().unwrap()], &second);
    assert!(o.status.success());
    assert_eq!(
        std::fs::read(first.join("measure.fcm")).unwrap(),
        std::fs::read(second.join("measure.fcm")).unwrap()
    );
}

#[test]
fn forms_invert_agrees_on_the_toy_pattern() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&["forms.invert"], tmp.path());
    assert!(o.status.success());
    let r = report(tmp.path());
    let gap = r["results"]["relative_gap"].as_f64().unwrap();
    assert!(gap <= 0.02, "relative gap {gap}");
    assert_eq!(r["results"]["within_tolerance"], true);
}

#[test]
fn pipeline_on_showcase_cantor_finds_a_witness() {
    let tmp = tempfile::tempdir().unwrap();
    let mu = build_measure(
        &tmp.path().join("m"),
        &[
            "--set",
            "n=2",
            "--set",
            "branching=4",
            "--set",
            "keep=15",
            "--set",
            "generations=4",
            "--seed",
            "10",
        ],
    );
    let out = tmp.path().join("p");
    let o = run(
        &[
            "pipeline.positivity",
            "--input",
            &format!("measure={}", mu.display()),
        ],
        &out,
    );
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let r = report(&out);
    assert_eq!(r["status"], "ok");
    let witness = &r["results"]["witness"];
    assert!(witness.is_object(), "no witness in {r}");
    assert_eq!(witness["images"].as_array().unwrap().len(), 3);
}

#[test]
fn unknown_parameter_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&["measure.build", "--set", "bogus=1"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bogus"));
    let o = run(&["no.such.command"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    let cfg = tmp.path().join("bad.json");
    std::fs::write(&cfg, r#"{"command":"forms.invert","extra":1}"#).unwrap();
    let o = run(&["--config", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn failed_hypotheses_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("deg");
    let o = run(
        &[
            "patterns.check",
            "--set",
            r#"spec={"fixture":"degenerate"}"#,
        ],
        &out,
    );
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(report(&out)["status"], "hypothesis_failed");

    let mu = build_measure(
        &tmp.path().join("pt"),
        &["--set", "n=2", "--set", "kind=\"point\"", "--set", "res=16"],
    );
    let out = tmp.path().join("pipe");
    let o = run(
        &[
            "pipeline.positivity",
            "--input",
            &format!("measure={}", mu.display()),
        ],
        &out,
    );
    assert_eq!(
        o.status.code(),
        Some(2),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    assert_eq!(report(&out)["status"], "hypothesis_failed");
}

#[test]
fn holder_csv_has_one_row_per_trial() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(
        &["bounds.holder", "--set", "trials=37", "--seed", "3"],
        tmp.path(),
    );
    assert!(o.status.success());
    let mut reader = csv::Reader::from_path(tmp.path().join("trials.csv")).unwrap();
    assert_eq!(reader.headers().unwrap().len(), 4);
    assert_eq!(reader.records().count(), 37);
}

#[test]
fn report_is_canonical_json() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&["forms.invert"], tmp.path());
    let stdout = String::from_utf8(o.stdout).unwrap();
    let text = std::fs::read_to_string(tmp.path().join("report.json")).unwrap();
    assert_eq!(stdout, text);
    let v: Value = serde_json::from_str(&text).unwrap();
    assert_eq!(
        fractalconfig::io::canonical_json(&v).len(),
        text.trim_end().len()
    );
    for key in ["command", "config", "results", "status"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
}

#[test]
fn tables_are_cached_by_content() {
    let tmp = tempfile::tempdir().unwrap();
    let cache = tmp.path().join("cache");
    let mu = build_measure(
        &tmp.path().join("m"),
        &["--set", "n=1", "--set", "generations=4"],
    );
    let input = format!("measure={}", mu.display());
    let go = |out: &str| {
        bin()
            .env("FRACTALCONFIG_CACHE", &cache)
            .args(["fourier.certify", "--input", &input, "--out"])
            .arg(tmp.path().join(out))
            .output()
            .unwrap()
    };
    assert!(go("first").status.success());
    let files: Vec<_> = std::fs::read_dir(&cache).unwrap().collect();
    assert_eq!(files.len(), 1);
    assert!(go("second").status.success());
    assert_eq!(std::fs::read_dir(&cache).unwrap().count(), 1);
    assert_eq!(
        report(&tmp.path().join("first"))["results"],
        report(&tmp.path().join("second"))["results"]
    );
}
