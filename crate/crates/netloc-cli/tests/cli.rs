use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_netloc"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn netloc")
}

fn schema_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../schemas")
        .join(format!("{name}.schema.json"))
}

/// Runs with `--json`, asserts success and validates against the command's schema.
fn json(schema: &str, args: &[&str]) -> Value {
    let mut full = args.to_vec();
    full.push("--json");
    let out = run(&full);
    assert!(
        out.status.success(),
        "{args:?} exited {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    let v: Value = serde_json::from_slice(&out.stdout).expect("stdout is JSON");
    let s: Value = serde_json::from_str(&std::fs::read_to_string(schema_path(schema)).unwrap()).unwrap();
    let validator = jsonschema::validator_for(&s).expect("schema compiles");
    let errors: Vec<String> = validator.iter_errors(&v).map(|e| format!("{e} at {}", e.instance_path)).collect();
    assert!(errors.is_empty(), "{schema}: {errors:#?}");
    v
}

const SYS: &[&str] = &["--banded", "12", "2", "--beta", "0.2", "--scenario", "global-node:1"];

fn with<'a>(head: &[&'a str], tail: &[&'a str]) -> Vec<&'a str> {
    head.iter().chain(tail).copied().collect()
}

#[test]
fn every_command_matches_its_schema() {
    json("gen", &["gen", "--banded", "8", "2"]);
    json("spectrum", &["spectrum", "--banded", "8", "2", "--beta", "0.2"]);
    json("localize", &["localize", "--banded", "60", "10"]);
    json("sensitivity", &["sensitivity", "--banded", "30", "5", "--scenario", "edge:0,1"]);
    json("pspec", &with(&["pspec"], &with(SYS, &["--grid", "6,6", "--contours"])));
    json("margin", &with(&["margin"], &with(SYS, &["--eps", "0.5", "--samples", "5"])));
    json("destabilize", &with(&["destabilize"], SYS));
    json("simulate", &["simulate", "--banded", "12", "2", "--beta", "0.2", "--t-final", "30"]);
}

#[test]
fn experiment_writes_its_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("exp.json");
    std::fs::write(
        &spec,
        r#"{"graph": {"kind": "banded-width", "n": 40, "width": 16}, "beta": 0.1,
            "scenarios": [{"mode": "auto", "scenario": "global-node"},
                          {"mode": "pair", "localized": {"kind": "edge", "k": 0, "l": 1},
                           "delocalized": {"kind": "edge", "k": 19, "l": 20}}],
            "output_dir": "unused"}"#,
    )
    .unwrap();
    let out = dir.path().join("out");
    let v = json("experiment", &["experiment", spec.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(v["n"], 40);
    assert_eq!(v["kinds"].as_array().unwrap().len(), 2);
    assert!(out.join("manifest.json").is_file());
}

#[test]
fn margin_reports_positive_quantities() {
    let v = json("margin", &with(&["margin"], SYS));
    let (h, m) = (v["hinf"].as_f64().unwrap(), v["margin"].as_f64().unwrap());
    assert!(h > 0.0 && m > 0.0);
    assert!((h * m - 1.0).abs() < 1e-12);
    assert!(v["omega_bar"].as_f64().unwrap() >= 0.0);
}

#[test]
fn generated_graph_round_trips_into_localize() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("g.edges");
    let f = file.to_str().unwrap();
    let out = run(&["gen", "--banded", "100", "40", "--width", "--out", f]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let from_file = json("localize", &["localize", "--graph", f]);
    let direct = json("localize", &["localize", "--banded", "100", "40", "--width"]);
    assert_eq!(from_file, direct);
    let labels = from_file["labels"].as_array().unwrap();
    assert_eq!(labels.len(), 100);
    assert!(labels.iter().any(|l| l == "localized"));
}

#[test]
fn exit_codes_separate_usage_from_numerics() {
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["localize", "--banded", "10", "2", "--bogus"]).status.code(), Some(1));
    assert_eq!(run(&["margin", "--banded", "10", "2", "--scenario", "edge:0"]).status.code(), Some(1));
    assert_eq!(run(&["localize", "--graph", "/nonexistent/g.edges"]).status.code(), Some(1));

    // A cycle has repeated eigenvalues, so per-eigenvalue profiles are undefined.
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("cycle.edges");
    let edges: String = (0..8).map(|i| format!("{i} {}\n", (i + 1) % 8)).collect();
    std::fs::write(&file, edges).unwrap();
    let out = run(&["sensitivity", "--graph", file.to_str().unwrap(), "--scenario", "global-node:0"]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!out.stderr.is_empty());
}

#[test]
fn seeded_runs_are_reproducible() {
    let args = with(&["margin"], &with(SYS, &["--samples", "20", "--seed", "7", "--json"]));
    let a = run(&args);
    let b = run(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);

    let sim = ["simulate", "--banded", "12", "2", "--beta", "0.2", "--t-final", "20", "--seed", "3", "--json"];
    assert_eq!(run(&sim).stdout, run(&sim).stdout);
    let mut other = sim;
    other[9] = "4";
    assert_ne!(run(&sim).stdout, run(&other).stdout);
}

#[test]
fn thread_count_does_not_change_results() {
    let base = with(&["pspec"], &with(SYS, &["--grid", "12,12", "--json"]));
    let one = run(&with(&base, &["--threads", "1"]));
    let four = run(&with(&base, &["--threads", "4"]));
    assert!(one.status.success() && four.status.success());
    assert_eq!(one.stdout, four.stdout);
}

#[test]
fn out_dir_receives_csv_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let out = run(&with(&["pspec"], &with(SYS, &["--grid", "5,4", "--out", d])));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("pspec.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 5 * 4);
    assert!(dir.path().join("pspec.json").is_file());
}

#[test]
fn delay_destabilizer_file_drives_simulate() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let sys = ["--banded", "50", "10", "--beta", "0.1"];
    let out = run(&with(&["destabilize"], &with(&sys, &["--scenario", "global-node:2", "--kind", "delay", "--no-verify", "--out", d])));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let file = dir.path().join("destabilizer_delay.json");
    let f = file.to_str().unwrap();
    let verdict = |scale: &str| {
        let v = json("simulate", &with(&["simulate"], &with(&sys, &["--destabilizer", f, "--scale", scale])));
        v["verdict"]["growth"].as_str().unwrap().to_owned()
    };
    assert_eq!(verdict("1.05"), "growing");
    assert_eq!(verdict("0.9"), "bounded");
}
