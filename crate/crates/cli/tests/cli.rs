use std::process::{Command, Output};

use serde_json::Value;

fn cloudsre(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cloudsre"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn generate_csv_has_header_and_n_rows() {
    let out = cloudsre(&[
        "generate", "--en", "0,1", "--he", "0.5", "--n", "100", "--seed", "1", "--format", "csv",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 101);
    assert_eq!(lines[0], "drop");
    assert!(lines[1..].iter().all(|l| l.parse::<f64>().is_ok()));
}

#[test]
fn generate_json_carries_metadata() {
    let out = cloudsre(&["generate", "--en", "1,2,3", "--he", "0.25", "--n", "5", "--seed", "9"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["command"], "generate");
    assert_eq!(v["seed"], 9);
    assert_eq!(v["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(v["params"]["p"], 3);
    assert_eq!(v["params"]["he"], 0.25);
    assert_eq!(v["definition"], "def1");
    assert_eq!(v["values"].as_array().unwrap().len(), 5);
}

#[test]
fn definitions_agree_through_the_cli() {
    let run = |def: &str| {
        let out = cloudsre(&[
            "generate", "--en", "0.5,-1,2", "--he", "0.3", "--n", "50", "--seed", "4", "--def", def,
            "--format", "csv",
        ]);
        assert_eq!(out.status.code(), Some(0));
        out.stdout
    };
    assert_eq!(run("1"), run("2"));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let argv = [
        "simulate", "--form", "abs", "--a", "gauss:1.0", "--b", "ar1:0.5,0.3,1", "--x0", "0",
        "--steps", "200", "--seed", "17",
    ];
    let first = cloudsre(&argv);
    let second = cloudsre(&argv);
    assert_eq!(first.status.code(), Some(0));
    assert_eq!(first.stdout, second.stdout);

    let stat = ["stationarity", "--scale", "1", "--replicas", "100", "--seed", "2"];
    let one = cloudsre(&[&stat[..], &["--threads", "1"]].concat());
    let many = cloudsre(&[&stat[..], &["--threads", "3"]].concat());
    assert_eq!(one.stdout, many.stdout);
}

#[test]
fn simulate_csv_rows_cover_zero_to_n() {
    let out = cloudsre(&[
        "simulate", "--form", "linear", "--a", "const:0.5", "--b", "const:1", "--x0", "0",
        "--steps", "60", "--format", "csv",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "t,x");
    assert_eq!(lines.len(), 62);
    assert_eq!(lines[1], "0,0.0");
    let last: f64 = lines[61].split(',').nth(1).unwrap().parse().unwrap();
    assert!((last - 2.0).abs() < 1e-15);
}

#[test]
fn usage_errors_exit_2() {
    let cases: &[&[&str]] = &[
        &["generate", "--en", "0", "--he", "0"],
        &["generate", "--en", "0", "--he", "-1", "--n", "3"],
        &["generate", "--en", "0,x", "--he", "1", "--n", "3"],
        &["generate", "--he", "1", "--n", "3"],
        &["simulate", "--form", "abs", "--a", "gauss:1", "--b", "ar1:0,1,1", "--steps", "5"],
        &["simulate", "--form", "sideways", "--a", "gauss:1", "--b", "const:1", "--steps", "5"],
        &["lyapunov", "--scale", "1", "--frobnicate"],
        &["lyapunov", "--scale", "1", "--samples", "10"],
        &["stationarity", "--scale", "1", "--replicas", "10"],
        &["stationarity", "--scale", "1", "--lags", "0,5"],
        &["couple", "--scale", "1", "--x0", "3", "--x0-alt", "3"],
        &["series", "--a", "const:0.5", "--b", "const:1", "--format", "csv"],
        &["bogus"],
    ];
    for argv in cases {
        let out = cloudsre(argv);
        assert_eq!(out.status.code(), Some(2), "{argv:?}");
        assert!(!out.stderr.is_empty(), "{argv:?}");
    }
}

#[test]
fn unwritable_output_is_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("missing").join("out.json");
    let out = cloudsre(&["generate", "--en", "0", "--he", "1", "--n", "3", "--out", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn out_flag_writes_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("drops.json");
    let out = cloudsre(&["generate", "--en", "0", "--he", "1", "--n", "3", "--out", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(v["values"].as_array().unwrap().len(), 3);
}

#[test]
fn lyapunov_matches_closed_form() {
    let out = cloudsre(&["lyapunov", "--scale", "1", "--samples", "1000000"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["command"], "lyapunov");
    let est = v["lyapunov"]["estimate"].as_f64().unwrap();
    let se = v["lyapunov"]["stderr"].as_f64().unwrap();
    assert!((est - -0.6351814227).abs() <= 4.0 * se);
    assert_eq!(v["checks"][0]["passed"], true);
}

#[test]
fn unstable_stationarity_is_anomaly() {
    let out = cloudsre(&["stationarity", "--scale", "3", "--b", "const:1"]);
    assert_eq!(out.status.code(), Some(3));
    let v = json(&out);
    assert_eq!(v["command"], "stationarity");
    assert_eq!(v["params"]["scale"], 3.0);
    assert!(v["anomaly"].as_str().unwrap().contains("divergence guard"));
    assert_eq!(v["verdict"], "unstable_expected");
}

#[test]
fn stable_diagnostics_pass() {
    let out = cloudsre(&["couple", "--scale", "1", "--b", "const:1", "--x0", "0", "--x0-alt", "100", "--steps", "500"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["coupling"]["contraction_violations"], 0);
    assert!(v["coupling"]["slope"].as_f64().unwrap() < 0.0);

    let out = cloudsre(&["stationarity", "--scale", "1", "--seed", "5"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["verdict"], "stationary_expected");
    assert_eq!(v["stationarity"]["ks_stats"].as_array().unwrap().len(), 3);
}

#[test]
fn series_reports_value_or_anomaly() {
    let out = cloudsre(&["series", "--a", "const:0.5", "--b", "const:1", "--kmax", "1000", "--tol", "1e-12"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert!((v["value"].as_f64().unwrap() - 2.0).abs() <= 1e-11);

    let out = cloudsre(&["series", "--a", "gauss:3", "--b", "const:1", "--kmax", "100"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(json(&out)["anomaly"].is_string());
}

#[test]
fn help_documents_exit_codes_and_equations() {
    let out = cloudsre(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("Exit codes"));
    let out = cloudsre(&["simulate", "--help"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("X_t = A_t |X_{t-1}| + B_t"));
}
