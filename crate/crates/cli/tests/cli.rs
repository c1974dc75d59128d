use std::path::Path;
use std::process::{Command, Output};

fn gridad(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gridad"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], dir: &Path) -> String {
    let out = gridad(args, dir);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn pipeline_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("build.json"),
        r#"{
            "task": "classify",
            "catalogs": [
                { "kind": "single-slc", "count": 20, "topologies": [0, 2] },
                { "kind": "single-fdia", "count": 20, "topologies": [0, 2] }
            ],
            "balance": true,
            "split": { "mode": "stratified", "train_fraction": 0.75 }
        }"#,
    )
    .unwrap();
    ok(&["build-dataset", "--config", "build.json", "--seed", "4", "--out", "data.csv"], d);
    let schema = json(&d.join("data.csv.json"));
    assert_eq!(schema["seed"], 4);
    ok(&["select-features", "data.csv", "--k", "20", "--out", "sel.json"], d);
    assert_eq!(json(&d.join("sel.json"))["indices"].as_array().unwrap().len(), 20);
    ok(
        &["train", "data.csv", "--model", "rf", "--seed", "1", "--selection", "sel.json", "--out", "rf.json"],
        d,
    );
    let trained = json(&d.join("rf.metrics.json"));
    std::fs::create_dir(d.join("eval")).unwrap();
    ok(&["evaluate", "data.csv", "--model", "rf.json", "--out", "eval"], d);
    let evaluated = json(&d.join("eval/rf.metrics.json"));
    assert_eq!(trained["macro_f1"], evaluated["macro_f1"]);
    assert_eq!(trained["samples"], evaluated["samples"]);
    assert_eq!(trained["k_features"], 20);
}

#[test]
fn simulate_and_detect_a_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("attack.json"),
        r#"{
            "topology": 1,
            "profile": { "kind": "ramp", "start": 1.0, "end": 0.98, "steps": 30 },
            "anomalies": [{ "kind": "fdia", "states": ["V12"], "offsets": [0.08], "onset": 20 }]
        }"#,
    )
    .unwrap();
    ok(&["simulate", "--scenario", "attack.json", "--seed", "3", "--out", "."], d);
    assert!(d.join("attack.csv").exists() && d.join("attack.csv.json").exists());
    // The scenario file is left alone.
    assert!(std::fs::read_to_string(d.join("attack.json")).unwrap().contains("V12"));
    let stdout = ok(&["detect", "attack.csv", "--out", "."], d);
    assert!(stdout.contains("attack"), "{stdout}");
    let report = std::fs::read_to_string(d.join("attack.report.csv")).unwrap();
    let onset = report.lines().find(|l| l.starts_with("20,")).unwrap();
    assert!(onset.ends_with("anomaly-SLC-or-FDIA"), "{onset}");
}

#[test]
fn exit_codes_follow_the_error_class() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(gridad(&["--help"], d).status.code(), Some(0));
    assert_eq!(gridad(&["train", "--model", "rf"], d).status.code(), Some(1));
    assert_eq!(
        gridad(&["simulate", "--scenario", "a.json", "--grid", "b.json", "--seed", "1"], d).status.code(),
        Some(1)
    );
    // Missing input is a data error.
    assert_eq!(gridad(&["detect", "missing.csv"], d).status.code(), Some(2));

    std::fs::write(d.join("seeded.json"), r#"{ "topology": 0, "seed": 9 }"#).unwrap();
    let out = gridad(&["simulate", "--scenario", "seeded.json", "--seed", "1"], d);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("seed"));

    std::fs::write(d.join("typo.json"), r#"{ "topology": 0, "sigmaa": 0.1 }"#).unwrap();
    let out = gridad(&["simulate", "--scenario", "typo.json", "--seed", "1"], d);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sigmaa"));

    assert_eq!(gridad(&["train", "x.csv", "--model", "svm", "--seed", "1", "--out", "m.json"], d).status.code(), Some(1));
}
