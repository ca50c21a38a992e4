//! End-to-end contract tests for the `maxent` binary: exit codes, output
//! shapes, determinism. Everything runs the real executable against either
//! the shipped reference specs or small scratch specs written to a temp dir.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn spec_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../specs").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_maxent"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_env(args: &[&str], key: &str, value: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_maxent"))
        .args(args)
        .env(key, value)
        .output()
        .expect("binary runs")
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn parse_stdout(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is a json document")
}

fn write_spec(dir: &TempDir, name: &str, body: &str) -> PathBuf {
    let path = dir.path().join(name);
    fs::write(&path, body).unwrap();
    path
}

fn table<'a>(doc: &'a Value, name: &str) -> &'a Value {
    doc["tables"]
        .as_array()
        .unwrap()
        .iter()
        .find(|t| t["name"] == name)
        .unwrap_or_else(|| panic!("no table named {name}"))
}

fn summary_value(doc: &Value, quantity: &str) -> f64 {
    table(doc, "summary")["rows"]
        .as_array()
        .unwrap()
        .iter()
        .find(|r| r[0] == quantity)
        .unwrap_or_else(|| panic!("no summary row {quantity}"))[1]
        .as_f64()
        .unwrap()
}

#[test]
fn solve_reports_the_two_state_solution() {
    let out = run(&["solve", "--spec", spec_path("two_state_solve.json").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr_of(&out));
    let doc = parse_stdout(&out);
    assert_eq!(doc["schema_version"], 1);
    assert_eq!(doc["engine_version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(doc["command"], "solve");
    assert!(doc["spec_hash"].as_str().unwrap().starts_with("fnv1a64:"));

    let lambda = table(&doc, "multipliers")["rows"][0][2].as_f64().unwrap();
    assert!((lambda + (7.0f64 / 3.0).ln()).abs() < 1e-9);
    assert!((summary_value(&doc, "entropy") - 0.6108643020548935).abs() < 1e-9);
    assert_eq!(summary_value(&doc, "residual"), 0.0);
    assert_eq!(summary_value(&doc, "degenerate"), 0.0);

    // the density table carries the measure-weighted solution p = (0.3, 0.7)
    let density = table(&doc, "density");
    let rows = density["rows"].as_array().unwrap();
    assert!((rows[0][3].as_f64().unwrap() - 0.3).abs() < 1e-9);
    assert!((rows[1][3].as_f64().unwrap() - 0.7).abs() < 1e-9);
}

#[test]
fn malformed_json_exits_2_with_location() {
    let dir = TempDir::new().unwrap();
    let path = write_spec(&dir, "bad.json", "{ \"schema_version\": 1, ");
    let out = run(&["solve", "--spec", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr_of(&out);
    assert!(err.contains("line") && err.contains("column"), "no location in: {err}");
}

#[test]
fn missing_block_exits_3_naming_it() {
    let dir = TempDir::new().unwrap();
    let path = write_spec(
        &dir,
        "no_grid.json",
        r#"{"schema_version": 1, "name": "t", "space": {"generator": "two-state"}, "observables": [{"name": "A", "builtin": "identity"}]}"#,
    );
    let out = run(&["prior", "--spec", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr_of(&out).contains("parameter_grid"), "{}", stderr_of(&out));
}

#[test]
fn unknown_field_exits_3_naming_it() {
    let dir = TempDir::new().unwrap();
    let path = write_spec(
        &dir,
        "extra.json",
        r#"{"schema_version": 1, "name": "t", "bogus_knob": 4, "space": {"generator": "two-state"}}"#,
    );
    let out = run(&["solve", "--spec", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr_of(&out).contains("bogus_knob"), "{}", stderr_of(&out));
}

#[test]
fn infeasible_target_exits_4_with_module() {
    let dir = TempDir::new().unwrap();
    let path = write_spec(
        &dir,
        "outside.json",
        r#"{"schema_version": 1, "name": "t", "space": {"generator": "two-state"}, "observables": [{"name": "a", "builtin": "identity"}], "constraints": {"targets": [1.2]}}"#,
    );
    let out = run(&["solve", "--spec", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4));
    assert!(stderr_of(&out).contains("solver"), "{}", stderr_of(&out));
}

#[test]
fn missing_spec_file_exits_5() {
    let out = run(&["solve", "--spec", "/nonexistent/spec.json"]);
    assert_eq!(out.status.code(), Some(5));
}

#[test]
fn unwritable_out_dir_exits_5() {
    let dir = TempDir::new().unwrap();
    let blocker = dir.path().join("occupied");
    fs::write(&blocker, "x").unwrap();
    let out_arg = blocker.join("sub");
    let out = run(&[
        "solve",
        "--spec",
        spec_path("two_state_solve.json").to_str().unwrap(),
        "--out",
        out_arg.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(5), "{}", stderr_of(&out));
}

#[test]
fn empty_bundle_exits_3() {
    let dir = TempDir::new().unwrap();
    let path = write_spec(
        &dir,
        "no_tasks.json",
        r#"{"schema_version": 1, "name": "t", "space": {"generator": "two-state"}, "observables": [{"name": "A", "builtin": "identity"}], "parameter_grid": {"axes": [{"name": "A", "range": [0.0, 1.0], "resolution": 0.01, "offset": 0.01}]}, "alpha": []}"#,
    );
    let out = run(&["prior", "--spec", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr_of(&out).contains("empty"), "{}", stderr_of(&out));
}

#[test]
fn csv_without_out_dir_exits_3() {
    let out = run(&[
        "solve",
        "--spec",
        spec_path("two_state_solve.json").to_str().unwrap(),
        "--format",
        "csv",
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr_of(&out).contains("--out"), "{}", stderr_of(&out));
}

#[test]
fn csv_prior_tables_carry_the_contract_columns() {
    let dir = TempDir::new().unwrap();
    let out_dir = dir.path().join("out");
    let out = run(&[
        "prior",
        "--spec",
        spec_path("bernoulli_prior.json").to_str().unwrap(),
        "--alpha",
        "1",
        "--format",
        "csv",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr_of(&out));
    let pi = fs::read_to_string(out_dir.join("pi_alpha_1.csv")).unwrap();
    assert_eq!(pi.lines().next().unwrap(), "A,pi,scalar_density,S,sqrt_g");
    assert!(out_dir.join("summary.csv").exists());
    assert!(out_dir.join("sigma.csv").exists());
    // csv floats survive a round trip at full precision
    let first_pi: f64 = pi.lines().nth(1).unwrap().split(',').nth(1).unwrap().parse().unwrap();
    assert!(first_pi.is_finite() && first_pi > 0.0);
}

#[test]
fn json_out_dir_writes_result_file() {
    let dir = TempDir::new().unwrap();
    let out_dir = dir.path().join("out");
    let out = run(&[
        "solve",
        "--spec",
        spec_path("two_state_solve.json").to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr_of(&out));
    let text = fs::read_to_string(out_dir.join("result.json")).unwrap();
    let doc: Value = serde_json::from_str(&text).unwrap();
    assert_eq!(doc["command"], "solve");
}

#[test]
fn alpha_override_replaces_the_spec_sweep() {
    let path = spec_path("bernoulli_prior.json");
    let out = run(&["prior", "--spec", path.to_str().unwrap(), "--alpha", "1", "--no-timings"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr_of(&out));
    let doc = parse_stdout(&out);
    let names: Vec<&str> = doc["tables"]
        .as_array()
        .unwrap()
        .iter()
        .map(|t| t["name"].as_str().unwrap())
        .collect();
    assert!(names.contains(&"pi_alpha_1"));
    assert!(!names.iter().any(|n| n.contains("0.5")), "{names:?}");
}

#[test]
fn timings_toggle() {
    let spec = spec_path("two_state_solve.json");
    let with = run(&["solve", "--spec", spec.to_str().unwrap()]);
    let without = run(&["solve", "--spec", spec.to_str().unwrap(), "--no-timings"]);
    let with_text = String::from_utf8_lossy(&with.stdout).into_owned();
    let without_text = String::from_utf8_lossy(&without.stdout).into_owned();
    assert_eq!(with_text.matches("\"timings\"").count(), 1);
    assert!(with_text.contains("total_ms"));
    assert!(!without_text.contains("\"timings\""));
}

#[test]
fn repeated_runs_are_byte_identical_across_thread_counts() {
    let spec = spec_path("bernoulli_prior.json");
    let args = ["prior", "--spec", spec.to_str().unwrap(), "--no-timings"];
    let base = run(&args);
    assert_eq!(base.status.code(), Some(0), "{}", stderr_of(&base));
    let again = run(&args);
    assert_eq!(base.stdout, again.stdout, "same invocation drifted");
    for threads in ["1", "2", "0"] {
        let pinned = run_env(&args, "MAXENT_THREADS", threads);
        assert_eq!(pinned.status.code(), Some(0), "{}", stderr_of(&pinned));
        assert_eq!(base.stdout, pinned.stdout, "MAXENT_THREADS={threads} drifted");
    }
}

#[test]
fn bad_thread_count_exits_3() {
    let out = run_env(
        &["solve", "--spec", spec_path("two_state_solve.json").to_str().unwrap()],
        "MAXENT_THREADS",
        "lots",
    );
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr_of(&out).contains("MAXENT_THREADS"), "{}", stderr_of(&out));
}

#[test]
fn stray_flags_are_rejected_per_subcommand() {
    let solve_spec = spec_path("two_state_solve.json");
    let prior_spec = spec_path("bernoulli_prior.json");
    let cases: [(&[&str], &str); 3] = [
        (&["solve", "--spec", solve_spec.to_str().unwrap(), "--alpha", "1"], "--alpha"),
        (&["prior", "--spec", prior_spec.to_str().unwrap(), "--n", "2"], "--n"),
        (&["solve", "--spec", solve_spec.to_str().unwrap(), "--finite-bath"], "--finite-bath"),
    ];
    for (args, flag) in cases {
        let out = run(args);
        assert_eq!(out.status.code(), Some(3), "{flag} was not rejected");
        assert!(stderr_of(&out).contains(flag), "{}", stderr_of(&out));
    }
}

#[test]
fn fluct_json_round_trips_at_full_precision() {
    let out = run(&[
        "fluct",
        "--spec",
        spec_path("binomial_fluct.json").to_str().unwrap(),
        "--no-timings",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr_of(&out));
    let doc = parse_stdout(&out);
    let mean = summary_value(&doc, "max_disagreement");
    assert!(mean <= 1e-4);
    // serializing the parsed document reproduces every float bit-for-bit
    let pi_rows = table(&doc, "pi")["rows"].as_array().unwrap();
    for row in pi_rows.iter().step_by(500) {
        let x = row[1].as_f64().unwrap();
        let reparsed: f64 = serde_json::to_string(&x).unwrap().parse().unwrap();
        assert_eq!(x.to_bits(), reparsed.to_bits());
    }
}

fn checks_dir(dir: &Path) -> PathBuf {
    dir.join("out")
}

#[test]
fn check_reports_every_property_and_writes_a_bundle() {
    let dir = TempDir::new().unwrap();
    let out_dir = checks_dir(dir.path());
    let out = run(&[
        "check",
        "--spec",
        spec_path("check_reference.json").to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr_of(&out));
    let report = String::from_utf8_lossy(&out.stdout);
    assert!(report.contains("properties hold"), "{report}");
    assert!(!report.contains("FAILED"), "{report}");

    let text = fs::read_to_string(out_dir.join("result.json")).unwrap();
    let doc: Value = serde_json::from_str(&text).unwrap();
    let rows = table(&doc, "checks")["rows"].as_array().unwrap();
    assert!(rows.len() >= 21, "only {} checks ran", rows.len());
    assert!(rows.iter().all(|r| r[1].as_f64() == Some(1.0)));
}
