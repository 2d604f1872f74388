//! End-to-end tests of the `ttl` binary: exit codes, output schemas,
//! config merging, determinism, and the golden --help transcripts.

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ttl"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn ttl")
}

fn stdout_json(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "expected success, got {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn write_file(dir: &Path, name: &str, contents: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, contents).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn zero_data_are_accepted_at_zero_tolerance() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_file(
        dir.path(),
        "zeros.json",
        &serde_json::json!({ "x": vec![0.0; 16], "sigma": 1.0 }).to_string(),
    );
    let out = run(&[
        "test", "--p", "1", "--d", "16", "--eps0", "0", "--alpha", "0.05", "--data", &data,
        "--seed", "7",
    ]);
    let report = stdout_json(&out);
    assert_eq!(report["decision"]["reject"], Value::Bool(false));
    assert_eq!(report["model"], "gaussian");
    // Default separation fills in eps0 + sigma d^{3/4} = 8.
    assert_eq!(report["eps1"].as_f64().unwrap(), 8.0);
}

#[test]
fn loud_data_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_file(
        dir.path(),
        "loud.json",
        &serde_json::json!({ "x": vec![20.0; 16], "sigma": 1.0 }).to_string(),
    );
    let out = run(&[
        "test", "--p", "1", "--eps0", "0", "--data", &data, "--seed", "7",
    ]);
    let report = stdout_json(&out);
    assert_eq!(report["decision"]["reject"], Value::Bool(true));
}

#[test]
fn count_data_route_through_the_estimation_test() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_file(
        dir.path(),
        "counts.json",
        &serde_json::json!({
            "counts": [30u64, 20, 26, 24],
            "reference": [0.25, 0.25, 0.25, 0.25],
        })
        .to_string(),
    );
    let out = run(&[
        "test", "--p", "1", "--eps0", "0.3", "--eps1", "0.9", "--data", &data, "--seed", "7",
    ]);
    let report = stdout_json(&out);
    assert_eq!(report["model"], "multinomial");
    assert_eq!(report["calibration"], "estimation");
    assert_eq!(report["n"].as_u64().unwrap(), 100);
    assert_eq!(report["decision"]["reject"], Value::Bool(false));
}

#[test]
fn degenerate_moment_problem_value_is_zero() {
    let out = run(&["lowerbound", "--p", "4", "--L", "4", "--seed", "1"]);
    let report = stdout_json(&out);
    let value = report["value"].as_f64().unwrap();
    assert!(value.abs() <= 1e-9, "M_4(4) should vanish, got {value}");
    assert!(report["pair"]["support"].is_array());
}

#[test]
fn certificates_verify_and_tampering_is_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cert_path = dir.path().join("cert.json");
    let out = bin()
        .args(["lowerbound", "--free-tolerance", "--d", "4096", "--seed", "1"])
        .args(["--output", cert_path.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let out = run(&["verify", cert_path.to_str().unwrap(), "--seed", "1"]);
    let report = stdout_json(&out);
    assert_eq!(report["ok"], Value::Bool(true));

    let mut cert: Value =
        serde_json::from_str(&std::fs::read_to_string(&cert_path).unwrap()).unwrap();
    let chi2 = cert["chi2_upper"].as_f64().unwrap();
    cert["chi2_upper"] = Value::from(chi2 + 1.0);
    let bad = write_file(dir.path(), "bad.json", &cert.to_string());
    let out = run(&["verify", &bad, "--seed", "1"]);
    assert_eq!(out.status.code(), Some(2), "tampered certificate must exit 2");
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(run(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(run(&["test", "--p", "abc"]).status.code(), Some(1));
    // Missing required parameter is a validation error, not a panic.
    let out = run(&["calibrate", "--p", "2", "--eps0", "0", "--seed", "1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--d"));
}

#[test]
fn help_and_version_exit_0() {
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["--version"]).status.code(), Some(0));
    assert_eq!(run(&["regime-map", "--help"]).status.code(), Some(0));
}

#[test]
fn help_matches_the_golden_transcripts() {
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
    let mut cases = vec![("help.txt".to_owned(), vec!["--help"])];
    for sub in [
        "test",
        "calibrate",
        "lowerbound",
        "verify",
        "regime-map",
        "suboptimality",
        "tolerance-factor",
        "reduce",
        "physics-demo",
    ] {
        cases.push((format!("help_{sub}.txt"), vec![sub, "--help"]));
    }
    for (file, args) in cases {
        let expected = std::fs::read(golden.join(&file)).unwrap_or_else(|e| {
            panic!("missing golden file {file}: {e}");
        });
        let out = run(&args);
        assert_eq!(out.status.code(), Some(0));
        assert_eq!(
            out.stdout,
            expected,
            "help text for `ttl {}` drifted from tests/golden/{file}",
            args.join(" ")
        );
    }
}

#[test]
fn missing_seed_is_drawn_and_reported_on_stderr() {
    let out = run(&["lowerbound", "--p", "4", "--L", "4"]);
    assert!(out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.lines().any(|l| {
            l.strip_prefix("seed: ")
                .is_some_and(|rest| rest.trim().parse::<u64>().is_ok())
        }),
        "stderr should report the drawn seed, got: {stderr}"
    );
}

#[test]
fn regime_map_csv_is_reproducible_and_traceable() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.csv");
    let args = [
        "regime-map", "--d", "64", "--eps0", "0,8", "--n-reps", "200", "--seed", "11",
    ];
    let first = bin()
        .args(args)
        .args(["--trace", trace.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    let second = run(&args);
    assert_eq!(first.stdout, second.stdout, "same seed must give identical CSV bytes");

    let text = String::from_utf8(first.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("eps0,critical_sep,predicted,label"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].ends_with(",free"));
    assert!(rows[1].ends_with(",interpolation"));

    let trace_text = std::fs::read_to_string(&trace).unwrap();
    let mut tlines = trace_text.lines();
    assert_eq!(
        tlines.next(),
        Some("eps0,eps1,d,sigma,alpha,n_reps,type1,power,stderr,seed")
    );
    // Both tolerances contribute a full bisection trace.
    assert_eq!(tlines.count(), 26);
    for line in trace_text.lines().skip(1) {
        assert_eq!(line.split(',').count(), 10);
        assert!(line.ends_with(",11"), "seed column should echo --seed: {line}");
    }
}

#[test]
fn config_supplies_defaults_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_file(
        dir.path(),
        "cfg.json",
        r#"{ "p": 2.0, "d": 256, "eps0": 0.0, "alpha": 0.2, "seed": 3 }"#,
    );
    let out = run(&["calibrate", "--config", &cfg]);
    let report = stdout_json(&out);
    assert_eq!(report["alpha"].as_f64().unwrap(), 0.2);
    assert_eq!(report["d"].as_u64().unwrap(), 256);
    assert_eq!(report["seed"].as_u64().unwrap(), 3);
    let base = report["threshold"].as_f64().unwrap();

    let out = run(&["calibrate", "--config", &cfg, "--alpha", "0.05"]);
    let report = stdout_json(&out);
    assert_eq!(report["alpha"].as_f64().unwrap(), 0.05);
    let stricter = report["threshold"].as_f64().unwrap();
    assert!(stricter > base, "smaller alpha must raise the cutoff");
    // sqrt(2 * 256 / 0.05) for the exact quadratic route.
    assert!((stricter - 101.19288512538814).abs() < 1e-9);

    let bad = write_file(dir.path(), "bad.json", "[1, 2]");
    assert_eq!(run(&["calibrate", "--config", &bad]).status.code(), Some(1));
}

#[test]
fn thread_cap_is_respected() {
    let out = bin()
        .env("TTL_THREADS", "1")
        .args([
            "regime-map", "--d", "32", "--eps0", "0", "--n-reps", "100", "--seed", "2",
        ])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let out = bin()
        .env("TTL_THREADS", "zero")
        .args(["lowerbound", "--p", "4", "--L", "4", "--seed", "1"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn tolerance_factor_covers_both_data_models() {
    let dir = tempfile::tempdir().unwrap();
    let counts = write_file(
        dir.path(),
        "counts.json",
        &serde_json::json!({
            "counts": [90u64, 4, 3, 3],
            "reference": [0.25, 0.25, 0.25, 0.25],
        })
        .to_string(),
    );
    let out = run(&["tolerance-factor", "--data", &counts, "--seed", "1"]);
    let report = stdout_json(&out);
    assert_eq!(report["model"], "multinomial");
    let value = report["tolerance_factor"].as_f64().unwrap();
    // tv = 0.65, phi = 4 / 400, threshold eps + sqrt(0.01 / 0.05).
    let expected = 0.65 - (0.01f64 / 0.05).sqrt();
    assert!((value - expected).abs() < 1e-3, "got {value}, want {expected}");
    assert_eq!(report["censored"], Value::Bool(false));

    let gauss = write_file(
        dir.path(),
        "gauss.json",
        &serde_json::json!({ "x": vec![3.0; 16], "sigma": 1.0 }).to_string(),
    );
    let out = run(&[
        "tolerance-factor", "--data", &gauss, "--p", "2", "--bracket-hi", "50", "--seed", "1",
    ]);
    let report = stdout_json(&out);
    assert_eq!(report["model"], "gaussian");
    assert!(report["tolerance_factor"].as_f64().unwrap() > 0.0);

    // Gaussian route refuses to guess a bracket.
    let out = run(&["tolerance-factor", "--data", &gauss, "--p", "2", "--seed", "1"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn reduce_handles_both_function_models() {
    let dir = tempfile::tempdir().unwrap();
    let wn = write_file(
        dir.path(),
        "wn.json",
        &serde_json::json!({ "increments": vec![0.0; 64], "m": 64, "sigma": 0.05 }).to_string(),
    );
    let out = run(&[
        "reduce", "--model", "white-noise", "--p", "2", "--eps0", "0.1", "--eps1", "0.25",
        "--data", &wn, "--seed", "1",
    ]);
    let report = stdout_json(&out);
    assert_eq!(report["model"], "white-noise");
    assert_eq!(report["decision"]["reject"], Value::Bool(false));
    let d = report["d"].as_u64().unwrap();
    assert!(d >= 1);
    let factor = report["radius_factor"].as_f64().unwrap();
    assert!((report["scaled_eps0"].as_f64().unwrap() - 0.1 * factor).abs() < 1e-15);

    let obs: Vec<f64> = (0..200).map(|i| (i as f64 + 0.5) / 200.0).collect();
    let density = write_file(
        dir.path(),
        "obs.json",
        &serde_json::json!({ "observations": obs }).to_string(),
    );
    let out = run(&[
        "reduce", "--model", "density", "--p", "1", "--eps0", "0.05", "--eps1", "0.5",
        "--data", &density, "--seed", "1",
    ]);
    let report = stdout_json(&out);
    assert_eq!(report["model"], "density");
    assert_eq!(report["decision"]["reject"], Value::Bool(false));

    // Density transport is a total-variation argument; p must be 1.
    let out = run(&[
        "reduce", "--model", "density", "--p", "2", "--eps0", "0.05", "--eps1", "0.5",
        "--data", &density, "--seed", "1",
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn physics_demo_reports_the_floor_and_decision() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_file(
        dir.path(),
        "counts.json",
        &serde_json::json!({
            "counts": [70u64, 58, 64, 64],
            "reference": [0.25, 0.25, 0.25, 0.25],
        })
        .to_string(),
    );
    let out = run(&["physics-demo", "--data", &data, "--r", "0.05", "--seed", "1"]);
    let report = stdout_json(&out);
    assert_eq!(report["n"].as_u64().unwrap(), 256);
    assert_eq!(report["d"].as_u64().unwrap(), 4);
    assert!(report["predicted_floor"].as_f64().unwrap() > 0.0);
    assert!(report["decision"]["threshold"].as_f64().unwrap() > 0.0);
    // r = 0.05 is below 1/sqrt(n) = 1/16, the self-declared trust zone.
    assert_eq!(report["approximation_free"], Value::Bool(true));

    // Explicit n disagreeing with the counts is refused.
    let out = run(&["physics-demo", "--data", &data, "--r", "0.05", "--n", "999", "--seed", "1"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn output_flag_writes_the_file_instead_of_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("out.json");
    let out = bin()
        .args(["lowerbound", "--p", "1", "--L", "2", "--seed", "1"])
        .args(["-o", path.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let report: Value =
        serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert!((report["value"].as_f64().unwrap() - 0.25).abs() < 1e-4);
}

#[test]
fn lowerbound_modes_are_mutually_exclusive() {
    let out = run(&[
        "lowerbound", "--p", "2", "--L", "2", "--approx", "--bracket", "--seed", "1",
    ]);
    assert_eq!(out.status.code(), Some(1));
    // Bracket asks for even integer p.
    let out = run(&["lowerbound", "--p", "3", "--L", "4", "--bracket", "--seed", "1"]);
    assert_eq!(out.status.code(), Some(1));
    let out = run(&["lowerbound", "--p", "4", "--L", "3", "--bracket", "--seed", "1"]);
    let report = stdout_json(&out);
    assert!(report["lower"].as_f64().unwrap() > 0.0);
    assert!(report["upper"].as_f64().unwrap() >= report["lower"].as_f64().unwrap());
}

#[test]
fn an_exhausted_tolerance_bracket_is_censored_not_an_error() {
    let dir = tempfile::tempdir().unwrap();
    // Data loud enough to reject at every tolerance up to the bracket top:
    // the inversion reports the top and flags the censoring.
    let loud = write_file(
        dir.path(),
        "loud.json",
        &serde_json::json!({ "x": vec![100.0; 16], "sigma": 1.0 }).to_string(),
    );
    let out = run(&[
        "tolerance-factor", "--data", &loud, "--p", "2", "--bracket-hi", "1", "--seed", "1",
    ]);
    let report = stdout_json(&out);
    assert_eq!(report["censored"], Value::Bool(true));
    assert_eq!(report["tolerance_factor"].as_f64().unwrap(), 1.0);
}
