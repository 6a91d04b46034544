//! Exit-code contract and file-format behaviors of the binary.

use std::fs;
use std::process::{Command, Output};

use wiener_bv::orlicz::luxembourg_norm;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_wiener-bv"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

#[test]
fn help_and_bad_flags_use_the_documented_exit_codes() {
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["represent", "--help"]).status.code(), Some(0));
    // clap reports usage errors on exit code 2, same as our input errors
    assert_eq!(run(&["no-such-command"]).status.code(), Some(2));
    assert_eq!(run(&["tv", "--no-such-flag"]).status.code(), Some(2));
    assert_eq!(run(&["represent", "digital", "--t", "0"]).status.code(), Some(2));
    assert_eq!(
        run(&["represent", "digital", "--t", "1", "--refine", "geo:nope"]).status.code(),
        Some(2)
    );
    assert_eq!(
        run(&["represent", "digital", "--t", "1", "--bridge", "maybe"]).status.code(),
        Some(2)
    );
}

#[test]
fn represent_writes_both_report_and_convergence_table() {
    let dir = tempfile::tempdir().unwrap();
    let stem = dir.path().join("run");
    let out = run(&[
        "represent", "digital", "--t", "1", "--steps", "128", "--paths", "2000", "--seed",
        "3", "--refine", "geo:0.5", "--l1-tol", "0.2", "--out", &stem.to_string_lossy(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(stem.with_extension("json")).unwrap()).unwrap();
    assert_eq!(report["expected_mean"], 0.5);
    assert!(report["convergence"].as_array().unwrap().len() > 1);
    let csv = fs::read_to_string(stem.with_extension("csv")).unwrap();
    assert!(csv.starts_with("n_steps,paths,l1_error,l2_error,stderr\n"));
}

#[test]
fn custom_spec_drives_the_running_maximum() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("phi.json");
    // indicator of the maximum reaching 0.5: mean = 2 Phi(-0.5)
    fs::write(&spec, r#"{"base":0.0,"atoms":[{"x":0.5,"w":1.0}],"density":null}"#).unwrap();
    let out = run(&[
        "represent", "custom", "--spec", &spec.to_string_lossy(), "--running-max",
        "--steps", "512", "--paths", "20000", "--bridge", "on", "--seed", "9", "--l1-tol",
        "0.2",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_slice(&out.stdout).unwrap();
    let expected = report["expected_mean"].as_f64().unwrap();
    assert!((expected - 0.6170750774519738).abs() < 1e-12);

    // the same measure on W(k) instead: mean = 1 - Phi(0.5)
    let out = run(&[
        "represent", "custom", "--spec", &spec.to_string_lossy(), "--steps", "256",
        "--paths", "5000", "--seed", "9", "--l1-tol", "0.2",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let expected = report["expected_mean"].as_f64().unwrap();
    assert!((expected - 0.3085375387259869).abs() < 1e-12);

    // malformed measure (density arrays of mismatched length) is an input error
    fs::write(&spec, r#"{"base":0.0,"atoms":[],"density":{"knots":[0.0,1.0],"levels":[1.0,2.0]}}"#)
        .unwrap();
    let out = run(&["represent", "custom", "--spec", &spec.to_string_lossy()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn orlicz_norm_matches_the_library_and_handles_the_zero_sample() {
    let dir = tempfile::tempdir().unwrap();
    let values = dir.path().join("sample.json");
    let sample = vec![0.25, -1.5, 3.0, 0.0, -0.75];
    fs::write(&values, serde_json::to_string(&sample).unwrap()).unwrap();
    let out = run(&["orlicz", "norm", "--values", &values.to_string_lossy()]);
    assert_eq!(out.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let expect = luxembourg_norm(&sample).unwrap();
    assert_eq!(report["norm"].as_f64().unwrap(), expect);

    fs::write(&values, "[0.0, 0.0, 0.0]").unwrap();
    let out = run(&["orlicz", "norm", "--values", &values.to_string_lossy()]);
    assert_eq!(out.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["norm"].as_f64().unwrap(), 0.0);
}

#[test]
fn csv_format_flag_controls_single_file_commands() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("tv.csv");
    let out = run(&[
        "tv", "--x", "0", "--n", "1,10", "--format", "csv", "--out",
        &out_path.to_string_lossy(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let csv = fs::read_to_string(&out_path).unwrap();
    assert!(csv.starts_with("n,value,stderr\n"));
    assert_eq!(csv.lines().count(), 3);

    // ibp has no CSV form; asking for one is an input error
    let out = run(&[
        "ibp", "--paths", "500", "--steps", "64", "--format", "csv", "--out",
        &dir.path().join("ibp.csv").to_string_lossy(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn orthogonal_windows_zero_the_levelset_pairing() {
    let out = run(&[
        "chain", "levelset", "--x", "0", "--k-window", "0:0.5", "--h-window", "0.5:1",
        "--steps", "128", "--paths", "4000", "--seed", "17",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["rows"][0]["rhs"].as_f64().unwrap(), 0.0);
    assert!(report["rows"][0]["lhs"].as_f64().unwrap().abs() < 0.05);
}
