//! End-to-end checks of the impactlab binary: exit codes, determinism,
//! error paths, and the report bundle contents.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn impactlab(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_impactlab"))
        .args(["--out", dir.to_str().unwrap()])
        .args(args)
        .output()
        .unwrap()
}

fn assert_exit(output: &Output, code: i32) {
    assert_eq!(
        output.status.code(),
        Some(code),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
}

const FILLS_HEADER: &str =
    "order_id,sign,quantity,duration_days,start_logprice,end_logprice,sigma,daily_volume";

#[test]
fn simulate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let output = impactlab(out, &["--seed", "7", "simulate", "--n-orders", "1000"]);
        assert_exit(&output, 0);
    }
    let left = fs::read(a.join("fills.csv")).unwrap();
    let right = fs::read(b.join("fills.csv")).unwrap();
    assert_eq!(left, right);
    assert_eq!(left.split(|&b| b == b'\n').count(), 1002); // header + 1000 rows + trailing
}

#[test]
fn simulate_rejects_zero_orders() {
    let dir = tempfile::tempdir().unwrap();
    let output = impactlab(dir.path(), &["simulate", "--n-orders", "0"]);
    assert_exit(&output, 1);
    assert!(String::from_utf8_lossy(&output.stderr).contains("n_orders"));
}

#[test]
fn help_and_bad_flag_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_exit(&impactlab(dir.path(), &["--help"]), 0);
    assert_exit(&impactlab(dir.path(), &["simulate", "--no-such-flag"]), 1);
}

#[test]
fn estimate_header_only_fills_warns() {
    let dir = tempfile::tempdir().unwrap();
    fs::create_dir_all(dir.path()).unwrap();
    let fills = dir.path().join("fills.csv");
    fs::write(&fills, format!("{FILLS_HEADER}\n")).unwrap();
    let output = impactlab(dir.path(), &["estimate"]);
    assert_exit(&output, 0);
    let diag: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("diagnostics.json")).unwrap())
            .unwrap();
    assert_eq!(diag["n_records"], 0);
    assert_eq!(diag["warning"], "no populated cells");
    let curves = fs::read_to_string(dir.path().join("curves.csv")).unwrap();
    assert_eq!(curves.lines().count(), 1); // header only
}

#[test]
fn estimate_counts_out_of_range_durations() {
    let dir = tempfile::tempdir().unwrap();
    let fills = dir.path().join("fills.csv");
    // Two bucketable fills plus one whose duration matches no T bucket.
    let rows = [
        "1,1,1000,1,0,0.001,0.02,1000000",
        "2,-1,2000,0.25,0,-0.002,0.02,1000000",
        "3,1,1500,0.3,0,0.001,0.02,1000000",
    ];
    fs::write(&fills, format!("{FILLS_HEADER}\n{}\n", rows.join("\n"))).unwrap();
    let output = impactlab(dir.path(), &["estimate"]);
    assert_exit(&output, 0);
    let diag: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("diagnostics.json")).unwrap())
            .unwrap();
    assert_eq!(diag["n_records"], 3);
    assert_eq!(diag["out_of_range"], 1);
}

#[test]
fn estimate_bad_fills_row_is_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let fills = dir.path().join("fills.csv");
    fs::write(
        &fills,
        format!("{FILLS_HEADER}\n1,1,-5,1,0,0.001,0.02,1000000\n"),
    )
    .unwrap();
    let output = impactlab(dir.path(), &["estimate"]);
    assert_exit(&output, 2);
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("row 2"), "stderr: {stderr}");
    assert!(stderr.contains("quantity"), "stderr: {stderr}");
}

#[test]
fn fit_with_insufficient_data_is_numeric_error() {
    let dir = tempfile::tempdir().unwrap();
    let output = impactlab(dir.path(), &["--seed", "3", "simulate", "--n-orders", "40"]);
    assert_exit(&output, 0);
    assert_exit(&impactlab(dir.path(), &["estimate"]), 0);
    let output = impactlab(dir.path(), &["fit"]);
    assert_exit(&output, 3);
    assert!(String::from_utf8_lossy(&output.stderr).contains("cells"));
}

#[test]
fn cost_matches_frozen_constant_rate_value() {
    let dir = tempfile::tempdir().unwrap();
    fs::create_dir_all(dir.path()).unwrap();
    let schedule = dir.path().join("schedule.json");
    fs::write(
        &schedule,
        r#"{"total_quantity":10000,"duration_days":1,"breakpoints":[[0,0],[1,10000]]}"#,
    )
    .unwrap();
    let output = impactlab(dir.path(), &["cost", "--schedule", schedule.to_str().unwrap()]);
    assert_exit(&output, 0);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("cost_report.json")).unwrap())
            .unwrap();
    let per_share = report["expected_cost_per_share"].as_f64().unwrap();
    let ratio = report["ratio"].as_f64().unwrap();
    assert!((per_share / 4.714045207910317e-4 - 1.0).abs() < 1e-8);
    assert!((ratio / 0.023570226039551584 - 1.0).abs() < 1e-8);
    assert_eq!(report["execution_risk"].as_f64().unwrap(), 0.02);
}

#[test]
fn cost_rejects_malformed_schedule_naming_breakpoint() {
    let dir = tempfile::tempdir().unwrap();
    fs::create_dir_all(dir.path()).unwrap();
    let schedule = dir.path().join("schedule.json");
    fs::write(
        &schedule,
        r#"{"total_quantity":10000,"duration_days":1,"breakpoints":[[0,0],[0.5,8000],[0.4,9000],[1,10000]]}"#,
    )
    .unwrap();
    let output = impactlab(dir.path(), &["cost", "--schedule", schedule.to_str().unwrap()]);
    assert_exit(&output, 1);
    assert!(String::from_utf8_lossy(&output.stderr).contains("breakpoint"));
}

#[test]
fn report_without_prerequisites_lists_missing() {
    let dir = tempfile::tempdir().unwrap();
    let output = impactlab(dir.path(), &["report"]);
    assert_exit(&output, 2);
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("curves.csv"), "stderr: {stderr}");
    assert!(stderr.contains("fit_summary.json"), "stderr: {stderr}");
}

#[test]
fn default_pipeline_report_all_pass() {
    let dir = tempfile::tempdir().unwrap();
    for subcommand in ["simulate", "estimate", "fit", "report"] {
        assert_exit(&impactlab(dir.path(), &["--seed", "1", subcommand]), 0);
    }
    let checks: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(dir.path().join("report/checks.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(checks["all_pass"], true, "checks: {checks:#}");
    for file in ["left_panel.csv", "right_panel.csv", "inset.csv", "model_overlay.csv"] {
        assert!(dir.path().join("report").join(file).exists(), "missing {file}");
    }
    // The resolved configuration is echoed for provenance.
    let resolved: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(dir.path().join("resolved_config.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(resolved["seed"], 1);
}

#[test]
fn threads_env_fallback_is_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let output = Command::new(env!("CARGO_BIN_EXE_impactlab"))
        .env("IMPACTLAB_THREADS", "2")
        .args(["--out", dir.path().to_str().unwrap(), "--seed", "5"])
        .args(["simulate", "--n-orders", "500"])
        .output()
        .unwrap();
    assert_exit(&output, 0);
    assert!(dir.path().join("fills.csv").exists());
}

#[test]
fn failed_command_leaves_no_partial_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let fills = dir.path().join("fills.csv");
    fs::write(
        &fills,
        format!("{FILLS_HEADER}\n1,1,1000,1,0,0.001,0.02,1000000\n2,1,0,1,0,0.001,0.02,1000000\n"),
    )
    .unwrap();
    let output = impactlab(dir.path(), &["estimate"]);
    assert_exit(&output, 2);
    assert!(!dir.path().join("curves.csv").exists());
    assert!(!dir.path().join("diagnostics.json").exists());
    let leftovers: Vec<_> = fs::read_dir(dir.path())
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_name().to_string_lossy().ends_with(".tmp"))
        .collect();
    assert!(leftovers.is_empty(), "stray temp files: {leftovers:?}");
}
