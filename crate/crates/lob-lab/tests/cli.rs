//! End-to-end runs of the `lob-lab` binary: flags, config files, file
//! outputs, exit codes, and the solve -> verify round trip.

use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lob-lab"))
}

fn tmp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("lob-lab-cli-{tag}-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn solve_writes_csv_and_reports_non_degenerate() {
    let dir = tmp_dir("solve");
    let out = dir.join("path.csv");
    let result = run(&[
        "solve", "--alpha", "0", "--sigma", "1", "--T", "1", "--N", "100", "--out",
        out.to_str().unwrap(),
    ]);
    assert!(result.status.success(), "{result:?}");
    assert!(result.stderr.is_empty(), "stderr must carry no result data");
    assert!(stdout(&result).contains("non-degenerate"));
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.lines().nth(1).unwrap().starts_with("schema=1,t,pa,pb,la,lb"));
    assert_eq!(text.lines().count(), 103); // params line + header + 101 rows
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn solve_reports_degeneracy_as_a_result() {
    let dir = tmp_dir("degen");
    let out = dir.join("path.csv");
    let result = run(&[
        "solve", "--alpha", "0.1", "--sigma", "1", "--T", "1", "--N", "100", "--out",
        out.to_str().unwrap(),
    ]);
    assert!(result.status.success(), "degeneracy must exit 0");
    let line = stdout(&result);
    assert!(line.contains("degenerate from step"), "{line}");
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn solve_verify_round_trip() {
    let dir = tmp_dir("roundtrip");
    let csv = dir.join("path.csv");
    let report = dir.join("verify.json");
    let solve = run(&[
        "solve", "--alpha", "0", "--sigma", "1", "--T", "1", "--N", "20", "--out",
        csv.to_str().unwrap(),
    ]);
    assert!(solve.status.success());
    let verify = run(&[
        "verify",
        "--path-file",
        csv.to_str().unwrap(),
        "--paths",
        "20000",
        "--seed",
        "7",
        "--out",
        report.to_str().unwrap(),
    ]);
    assert!(
        verify.status.success(),
        "verify failed: {}",
        String::from_utf8_lossy(&verify.stderr)
    );
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(json["round_trip_checked"], true);
    assert_eq!(json["params"]["steps"], 20);
    assert!(json["value_function_checks"].as_array().unwrap().len() >= 4);
    assert!(json["max_gain"].is_number());
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn tampered_path_file_is_rejected() {
    let dir = tmp_dir("tamper");
    let csv = dir.join("path.csv");
    run(&[
        "solve", "--alpha", "0", "--N", "10", "--out", csv.to_str().unwrap(),
    ]);
    let mut text = std::fs::read_to_string(&csv).unwrap();
    // corrupt one quote in the last row
    let last = text.lines().last().unwrap().to_string();
    let bumped = last.replacen(',', ",9.99e0_corrupt", 1);
    text = text.replace(&last, &bumped);
    std::fs::write(&csv, text).unwrap();
    let verify = run(&[
        "verify",
        "--path-file",
        csv.to_str().unwrap(),
        "--paths",
        "100",
        "--out",
        dir.join("v.json").to_str().unwrap(),
    ]);
    assert_eq!(verify.status.code(), Some(2), "{verify:?}");
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn sweep_emits_the_pinned_schema() {
    let dir = tmp_dir("sweep");
    let out = dir.join("sweep.csv");
    let result = run(&[
        "sweep-spread",
        "--alpha",
        "0",
        "--N",
        "20,50,100",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(result.status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(
        text.lines().next().unwrap(),
        "schema=1,n,alpha,spread0,spreadT,max_abs_la,max_abs_lb,degenerate_from"
    );
    assert_eq!(text.lines().count(), 4);
    // bit-identical on repeat
    let again = dir.join("sweep2.csv");
    run(&[
        "sweep-spread",
        "--alpha",
        "0",
        "--N",
        "20,50,100",
        "--out",
        again.to_str().unwrap(),
    ]);
    assert_eq!(text, std::fs::read_to_string(&again).unwrap());
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn critical_alpha_writes_json() {
    let dir = tmp_dir("crit");
    let out = dir.join("crit.json");
    let result = run(&[
        "critical-alpha", "--N", "50", "--tol", "1e-4", "--out", out.to_str().unwrap(),
    ]);
    assert!(result.status.success());
    assert!(stdout(&result).contains("alpha_star"));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert!(json["alpha_star"].as_f64().unwrap() > 0.0);
    assert!(json["bracket_width"].as_f64().unwrap() <= 1e-4);
    assert!(json["scan_certificate"]["grid"].is_array());
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let dir = tmp_dir("config");
    let cfg = dir.join("run.conf");
    std::fs::write(&cfg, "alpha=0.1\nsigma=1.0\nT=1.0\nN=100\n").unwrap();
    let out = dir.join("a.csv");
    // config alone: alpha=0.1 at N=100 degenerates
    let result = run(&[
        "solve",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(result.status.success());
    assert!(stdout(&result).contains("degenerate from step"));
    // flag overrides alpha: zero drift never degenerates
    let result = run(&[
        "solve",
        "--config",
        cfg.to_str().unwrap(),
        "--alpha",
        "0",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(result.status.success());
    assert!(stdout(&result).contains("non-degenerate"));
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn validation_errors_exit_two() {
    let dir = tmp_dir("errs");
    let out = dir.join("x.csv");
    // missing N
    let result = run(&["solve", "--alpha", "0", "--out", out.to_str().unwrap()]);
    assert_eq!(result.status.code(), Some(2));
    // bad sigma
    let result = run(&[
        "solve", "--sigma", "-1", "--N", "10", "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(result.status.code(), Some(2));
    // unknown flag (clap)
    let result = run(&["solve", "--frequency", "10", "--out", out.to_str().unwrap()]);
    assert_eq!(result.status.code(), Some(2));
    // malformed numeric flag (clap)
    let result = run(&["solve", "--alpha", "zero", "--N", "10", "--out", out.to_str().unwrap()]);
    assert_eq!(result.status.code(), Some(2));
    // unwritable output path
    let result = run(&[
        "solve", "--N", "10", "--out", "/nonexistent-dir/x.csv",
    ]);
    assert_eq!(result.status.code(), Some(2));
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn tails_subcommand_writes_report() {
    let dir = tmp_dir("tails");
    let out = dir.join("tails.json");
    let result = bin()
        .args([
            "tails",
            "--spec",
            "brownian",
            "--paths",
            "30000",
            "--euler-steps",
            "100",
            "--seed",
            "5",
            "--mean-gap-dts",
            "1e-2",
            "--out",
            out.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(
        result.status.success(),
        "{}",
        String::from_utf8_lossy(&result.stderr)
    );
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(json["bound_check"]["pass"], true);
    assert!(json["bound_check"]["fits"][0]["c1_const"].as_f64().unwrap() > 0.0);
    assert!(json["mean_gap"]["rows"][0]["gap_at_zero"].as_f64().unwrap() > 0.5);
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn proximity_subcommand_writes_report() {
    let dir = tmp_dir("prox");
    let out = dir.join("prox.json");
    let result = run(&[
        "proximity",
        "--vol",
        "constant",
        "--alpha",
        "0",
        "--dts",
        "1e-2",
        "--paths",
        "50000",
        "--euler-steps",
        "10",
        "--seed",
        "5",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(
        result.status.success(),
        "{}",
        String::from_utf8_lossy(&result.stderr)
    );
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert!(json["rows"][0]["weighted_tail_gap"].as_f64().unwrap() >= 0.0);
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn thread_cap_does_not_change_results() {
    let dir = tmp_dir("threads");
    let (a, b) = (dir.join("a.json"), dir.join("b.json"));
    let base = [
        "verify", "--alpha", "0", "--N", "10", "--paths", "8000", "--seed", "11",
    ];
    let r1 = bin().args(base).args(["--threads", "1", "--out", a.to_str().unwrap()]).output().unwrap();
    let r2 = bin().args(base).args(["--threads", "4", "--out", b.to_str().unwrap()]).output().unwrap();
    assert!(r1.status.success() && r2.status.success());
    let ja = std::fs::read_to_string(&a).unwrap();
    let jb = std::fs::read_to_string(&b).unwrap();
    // identical modulo the echoed thread count
    assert_eq!(
        ja.replace("\"threads\": 1", "\"threads\": T"),
        jb.replace("\"threads\": 4", "\"threads\": T")
    );
    std::fs::remove_dir_all(&dir).unwrap();
}

/// The env var caps workers when no flag is given.
#[test]
fn env_var_thread_cap_is_honored() {
    let dir = tmp_dir("env");
    let out = dir.join("out.json");
    let result = bin()
        .env("LOB_LAB_THREADS", "2")
        .args([
            "verify", "--alpha", "0", "--N", "8", "--paths", "2000", "--seed", "3", "--out",
            out.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(result.status.success());
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(json["config"]["threads"], 2);
    std::fs::remove_dir_all(&dir).unwrap();
}

/// A fresh temp working file appears atomically: no partial file is left on
/// a failed run.
#[test]
fn failed_runs_leave_no_temp_files() {
    let dir = tmp_dir("atomic");
    let out = dir.join("never.csv");
    let result = run(&["solve", "--sigma", "-2", "--N", "10", "--out", out.to_str().unwrap()]);
    assert_eq!(result.status.code(), Some(2));
    let leftovers: Vec<_> = std::fs::read_dir(&dir).unwrap().collect();
    assert!(leftovers.is_empty(), "{leftovers:?}");
    std::fs::remove_dir_all(&dir).unwrap();
}
