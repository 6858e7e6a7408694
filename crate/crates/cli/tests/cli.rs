use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn hierlap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hierlap"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

fn run_kind(kind: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        kind,
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    hierlap(&args)
}

fn read(path: PathBuf) -> String {
    std::fs::read_to_string(path).unwrap()
}

fn first_line(text: &str) -> &str {
    text.lines().next().unwrap()
}

const P_ADIC: &str = r#"{
  "model": { "rule": "constant", "p": 2 },
  "alpha": { "form": "p_adic", "order": 2.0 },
  "noise": { "family": "uniform" },
  "t0": 0.0,
  "c": 3.141592653589793,
  "levels": [3, 5],
  "trials": 20000,
  "seed": 42
}"#;

const SINGLE_TERM: &str = r#"{
  "model": { "rule": "constant", "p": 2 },
  "alpha": { "form": "single_term" },
  "noise": { "family": "uniform" },
  "t0": 0.0,
  "c": 3.141592653589793,
  "levels": [2, 4],
  "trials": 20000,
  "seed": 11
}"#;

#[test]
fn golden_headers() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let spectrum = write_config(
        d,
        "spectrum.json",
        r#"{ "model": { "rule": "constant", "p": 2 },
             "spectrum": { "depth": 3, "operator": { "type": "p_adic_derivative", "order": 2.0 } } }"#,
    );
    let dos = write_config(
        d,
        "dos.json",
        r#"{ "model": { "rule": "constant", "p": 2 }, "alpha": { "form": "p_adic", "order": 2.0 },
             "noise": { "family": "uniform" }, "trials": 20000, "seed": 1,
             "dos": { "points": [0.0, 0.5] } }"#,
    );
    let verify = write_config(
        d,
        "verify.json",
        r#"{ "model": { "rule": "constant", "p": 2 }, "trials": 1000, "seed": 1,
             "verify": { "f": { "kind": "interval", "lo": 0.0, "hi": 0.5 },
                         "x": { "family": "uniform" }, "z": { "family": "uniform" } } }"#,
    );
    let p_adic = write_config(d, "p_adic.json", P_ADIC);
    for (kind, config) in [
        ("spectrum", &spectrum),
        ("simulate", &p_adic),
        ("bounds", &p_adic),
        ("dos", &dos),
        ("verify", &verify),
    ] {
        let out = run_kind(kind, config, d, &[]);
        assert!(
            out.status.success(),
            "{kind}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    let expected = [
        ("spectrum", "level,eigenvalue,multiplicity,params"),
        (
            "simulate",
            "level,sites,trials,seed,lambda_quad,lambda_quad_err,lambda_mc,lambda_mc_se,tv,tv_lower,tv_se,tv_bias_bound,params",
        ),
        (
            "bounds",
            "level,k,branch,lambda_ell,b1,b2_bound,b3_bound,assembled,constant_c,target,bound,bound_capped,trivial,applicable,params",
        ),
        ("dos", "t,eta,eta_err,method,flagged,eta_mc,eta_mc_se,trials,seed,params"),
        (
            "verify",
            "f,x,z,trials,seed,joint,joint_se,conditional,conditional_se,combined_se,agree_4se",
        ),
    ];
    for (kind, header) in expected {
        assert_eq!(
            first_line(&read(d.join(format!("{kind}.csv")))),
            header,
            "{kind}"
        );
        let json: serde_json::Value =
            serde_json::from_str(&read(d.join(format!("{kind}.json")))).unwrap();
        assert_eq!(json["kind"], kind);
        assert_eq!(json["schema"], 1);
        let row = json["rows"][0].as_object().unwrap();
        let mut keys: Vec<&str> = row.keys().map(String::as_str).collect();
        let mut cols: Vec<&str> = header.split(',').collect();
        keys.sort_unstable();
        cols.sort_unstable();
        assert_eq!(keys, cols, "{kind} json fields");
    }
}

#[test]
fn outputs_are_byte_identical_across_runs_and_workers() {
    let dir = TempDir::new().unwrap();
    let config = write_config(dir.path(), "c.json", P_ADIC);
    let mut csvs = Vec::new();
    for (i, workers) in ["1", "1", "3"].iter().enumerate() {
        let out = dir.path().join(format!("run{i}"));
        let status = run_kind("simulate", &config, &out, &["--workers", workers]);
        assert!(status.status.success());
        csvs.push((
            read(out.join("simulate.csv")),
            read(out.join("simulate.json")),
        ));
    }
    assert_eq!(csvs[0], csvs[1]);
    assert_eq!(csvs[0], csvs[2]);
    // the seed flag overrides the config
    let out = dir.path().join("other");
    assert!(run_kind("simulate", &config, &out, &["--seed", "43"])
        .status
        .success());
    assert_ne!(read(out.join("simulate.csv")), csvs[0].0);
}

#[test]
fn dyadic_level_nine_bound() {
    let dir = TempDir::new().unwrap();
    let body = P_ADIC.replace("[3, 5]", "[9]");
    let config = write_config(dir.path(), "c.json", &body);
    assert!(run_kind("bounds", &config, dir.path(), &[])
        .status
        .success());
    let mut reader = csv::Reader::from_path(dir.path().join("bounds.csv")).unwrap();
    let header = reader.headers().unwrap().clone();
    let row = reader.records().next().unwrap().unwrap();
    let col = |name: &str| &row[header.iter().position(|h| h == name).unwrap()];
    assert_eq!(col("k"), "6");
    let c: f64 = col("constant_c").parse().unwrap();
    let bound: f64 = col("bound").parse().unwrap();
    assert!((bound - c / 8.0).abs() <= 1e-12 * bound);
}

#[test]
fn horocycle_eigenvalue_is_one() {
    let dir = TempDir::new().unwrap();
    let config = write_config(
        dir.path(),
        "s.json",
        r#"{ "model": { "rule": "constant", "p": 2 },
             "spectrum": { "depth": 6, "operator": { "type": "p_adic_derivative", "order": 2.0 } } }"#,
    );
    assert!(run_kind("spectrum", &config, dir.path(), &[])
        .status
        .success());
    let csv = read(dir.path().join("spectrum.csv"));
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[0], "0");
    assert_eq!(row[1].parse::<f64>().unwrap(), 1.0);
    assert_eq!(csv.lines().count(), 8);
}

#[test]
fn compare_rejects_empty_input() {
    let dir = TempDir::new().unwrap();
    let empty = write_config(dir.path(), "empty.csv", "");
    let config = write_config(dir.path(), "c.json", P_ADIC);
    assert!(run_kind("bounds", &config, dir.path(), &[])
        .status
        .success());
    let bounds = dir.path().join("bounds.csv");
    let out = hierlap(&["compare", empty.to_str().unwrap(), bounds.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("empty"));
}

#[test]
fn compare_rejects_mismatched_configs() {
    let dir = TempDir::new().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let ca = write_config(dir.path(), "a.json", P_ADIC);
    let cb = write_config(
        dir.path(),
        "b.json",
        &P_ADIC.replace("\"t0\": 0.0", "\"t0\": 0.1"),
    );
    assert!(run_kind("simulate", &ca, &a, &[]).status.success());
    assert!(run_kind("bounds", &cb, &b, &[]).status.success());
    let out = hierlap(&[
        "compare",
        a.join("simulate.csv").to_str().unwrap(),
        b.join("bounds.csv").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("mismatched"));
}

#[test]
fn single_term_bound_is_not_applicable() {
    let dir = TempDir::new().unwrap();
    let config = write_config(dir.path(), "c.json", SINGLE_TERM);
    assert!(run_kind("simulate", &config, dir.path(), &[])
        .status
        .success());
    assert!(run_kind("bounds", &config, dir.path(), &[])
        .status
        .success());
    let out = hierlap(&[
        "compare",
        dir.path().join("simulate.csv").to_str().unwrap(),
        dir.path().join("bounds.csv").to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "level,tv,tv_se,bound,applicable,pass"
    );
    for line in lines {
        let cells: Vec<&str> = line.split(',').collect();
        assert_eq!(&cells[3..], ["n/a", "false", "n/a"]);
        assert!(cells[1].parse::<f64>().unwrap() < 0.2);
    }
    // TV is measured against Poi(c/2)
    let sim = read(dir.path().join("simulate.csv"));
    let lambda: f64 = sim
        .lines()
        .nth(1)
        .unwrap()
        .split(',')
        .nth(4)
        .unwrap()
        .parse()
        .unwrap();
    assert!((lambda - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
}

#[test]
fn config_errors_name_the_field() {
    let dir = TempDir::new().unwrap();
    let missing_t0 = write_config(dir.path(), "a.json", &P_ADIC.replace("\"t0\": 0.0,", ""));
    let out = run_kind("simulate", &missing_t0, dir.path(), &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("`t0`"));

    let missing_trials = write_config(
        dir.path(),
        "b.json",
        &P_ADIC.replace("\"trials\": 20000,", ""),
    );
    let out = run_kind("simulate", &missing_trials, dir.path(), &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("`trials`"));

    let bad_noise = write_config(
        dir.path(),
        "c.json",
        &P_ADIC.replace(
            r#"{ "family": "uniform" }"#,
            r#"{ "family": "beta", "a": 0.5, "b": 2.0 }"#,
        ),
    );
    let out = run_kind("simulate", &bad_noise, dir.path(), &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("`noise`"));
    assert!(!dir.path().join("simulate.csv").exists());
}

#[test]
fn infeasible_truncation_exits_with_numerical_code() {
    let dir = TempDir::new().unwrap();
    let body = P_ADIC
        .replace("\"order\": 2.0", "\"order\": 1.01")
        .replace("\"seed\": 42", "\"seed\": 42, \"tolerance\": 1e-320");
    let config = write_config(dir.path(), "c.json", &body);
    let out = run_kind("simulate", &config, dir.path(), &[]);
    assert_eq!(
        out.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}
