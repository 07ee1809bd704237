use std::path::Path;
use std::process::{Command, Output};

fn plaplab(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_plaplab"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

const SOURCE: &str = r#"{
    "grid": {"bounds": [[-1, 1]], "cells": [40], "T": 1.0, "steps": 40},
    "p": 2.0, "q": 2.0,
    "omega": {"atoms": [{"x": [0.0], "mass": 0.1}]},
    "lambda": 0.025
}"#;

#[test]
fn report_margins_match_trace_row_for_row() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    std::fs::write(dir.join("source.json"), SOURCE).unwrap();
    let o = plaplab(dir, &["pipeline", "source", "--config", "source.json", "--out", "run"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let trace = std::fs::read_to_string(dir.join("run/trace.csv")).unwrap();
    let o = plaplab(dir, &["report", "run"]);
    assert_eq!(code(&o), 0);
    let md = String::from_utf8(o.stdout).unwrap();
    let rows: Vec<&str> = md
        .lines()
        .skip_while(|l| !l.starts_with("## Iterations"))
        .filter(|l| l.starts_with("| ") && !l.starts_with("| m |"))
        .take_while(|l| l.split(" | ").count() == 5)
        .collect();
    let csv: Vec<&str> = trace.lines().skip(1).collect();
    assert_eq!(rows.len(), csv.len());
    for (r, c) in rows.iter().zip(&csv) {
        assert_eq!(r.trim_matches(|ch| ch == '|' || ch == ' ').replace(" | ", ","), *c);
    }
    assert!(md.contains("- status: ok"));
}

#[test]
fn empty_report_fails_with_expected_files() {
    let tmp = tempfile::tempdir().unwrap();
    let o = plaplab(tmp.path(), &["report", "."]);
    assert_eq!(code(&o), 1);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("constants.json") && err.contains("trace.csv"), "{err}");
}

#[test]
fn exponents_report_gives_one_row() {
    let tmp = tempfile::tempdir().unwrap();
    let o = plaplab(tmp.path(), &["exponents", "--N", "2", "--p", "2", "--out", "e"]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["p_c"], 2.0);
    assert!(v["p_e"].is_null(), "p_e is infinite for p = N");
    let md = String::from_utf8(plaplab(tmp.path(), &["report", "e"]).stdout).unwrap();
    let table: Vec<&str> = md.lines().filter(|l| l.starts_with('|')).collect();
    assert_eq!(table.len(), 3, "{md}");
}

#[test]
fn seeded_comparison_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let cfg = r#"{"grid": {"bounds": [[-1, 1]], "cells": [24], "T": 0.2, "steps": 10}, "p": 2.0, "pairs": 4}"#;
    std::fs::write(dir.join("cmp.json"), cfg).unwrap();
    let run = |seed: &str, out: &str| {
        let o = plaplab(dir, &["verify", "comparison", "--config", "cmp.json", "--seed", seed, "--out", out]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        std::fs::read_to_string(dir.join(out).join("comparison.csv")).unwrap()
    };
    let (a, b, c) = (run("7", "a"), run("7", "b"), run("8", "c"));
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert_eq!(a.lines().count(), 5);
}

#[test]
fn input_errors_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    std::fs::write(dir.join("ok.json"), SOURCE).unwrap();
    assert_eq!(code(&plaplab(dir, &["pipeline", "source", "--config", "ok.json"])), 1, "missing --out");
    assert_eq!(code(&plaplab(dir, &["frobnicate"])), 1, "unknown command");
    assert_eq!(code(&plaplab(dir, &["exponents", "--N", "2", "--p", "0.5"])), 1, "p ≤ 1");
    let bad = r#"{"grid": {"bounds": [[-1, 1]], "cells": [20]}, "p": 2.0, "u0": "x +* 2"}"#;
    std::fs::write(dir.join("bad.json"), bad).unwrap();
    let o = plaplab(dir, &["solve", "--config", "bad.json", "--out", "x"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("u0"));
    assert_eq!(code(&plaplab(dir, &["--help"])), 0);
}

#[test]
fn bound_violations_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let cfg = r#"{"grid": {"bounds": [[-1, 1]], "cells": [60]}, "p": 2.0,
        "omega": {"atoms": [{"x": [0.0], "mass": 1.0}]}, "kappa_cap": 0.01}"#;
    std::fs::write(dir.join("e.json"), cfg).unwrap();
    let o = plaplab(dir, &["solve-elliptic", "--config", "e.json", "--out", "e"]);
    assert_eq!(code(&o), 2);
    let run: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.join("e/run.json")).unwrap()).unwrap();
    assert_eq!(run["status"], "violation");
    assert!(dir.join("e/field.csv").is_file());
}

#[test]
fn expressions_drive_the_solver() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let cfg = r#"{"grid": {"bounds": [[-1, 1]], "cells": [20], "T": 0.1, "steps": 5}, "p": 2.0, "u0": "cos(pi*x/2)"}"#;
    std::fs::write(dir.join("h.json"), cfg).unwrap();
    assert_eq!(code(&plaplab(dir, &["solve", "--config", "h.json", "--out", "h"])), 0);
    let csv = std::fs::read_to_string(dir.join("h/solution.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,x,u"));
    assert_eq!(csv.lines().count(), 1 + 20 * 6);
    let first: Vec<f64> = lines.next().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(first[0], 0.0);
    assert!((first[2] - (std::f64::consts::PI * first[1] / 2.0).cos()).abs() < 1e-15);
}
