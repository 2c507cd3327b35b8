use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;
use tempfile::TempDir;

struct Run {
    code: i32,
    result: Value,
    manifest: Value,
    out: PathBuf,
}

fn run(dir: &TempDir, cmd: &str, input: &str, extra: &[&str]) -> Run {
    let input_path = dir.path().join(format!("{cmd}-input.json"));
    fs::write(&input_path, input).unwrap();
    let out = dir.path().join(format!("{cmd}-out-{}", extra.join("_").replace(['=', '.', '/'], "-")));
    let status = Command::new(env!("CARGO_BIN_EXE_conelab"))
        .arg(cmd)
        .arg("--input")
        .arg(&input_path)
        .arg("--out")
        .arg(&out)
        .args(extra)
        .status()
        .expect("binary runs");
    Run {
        code: status.code().expect("exit code"),
        result: read_json(&out.join("result.json")),
        manifest: read_json(&out.join("manifest.json")),
        out,
    }
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn read_csv(p: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(p).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

fn num(v: &Value) -> f64 {
    v.as_f64().unwrap_or_else(|| panic!("not a number: {v}"))
}

const UNIT_S2: &str = r#"{"variant": "round_sphere", "dim": 2, "beta": 1.0}"#;

#[test]
fn lambda_of_unit_sphere() {
    let d = TempDir::new().unwrap();
    let r = run(&d, "lambda", UNIT_S2, &[]);
    assert_eq!(r.code, 0);
    assert!((num(&r.result["lambda"]) - 2.0).abs() < 1e-10);
    assert_eq!(r.result["status"], "ok");
    assert_eq!(r.manifest["seed"], 42);
    assert_eq!(r.manifest["command"], "lambda");
    assert_eq!(r.manifest["input"]["link"]["dim"], 2);
}

#[test]
fn classify_wide_sphere_is_unbounded() {
    let d = TempDir::new().unwrap();
    let r = run(&d, "classify-cone", UNIT_S2, &["--set", "link.beta=2.0"]);
    assert_eq!(r.code, 4);
    assert_eq!(r.result["verdict"], "mu_infinite");
    assert!((num(&r.result["lambda_link"]) - 0.5).abs() < 1e-12);
    assert_eq!(r.result["status"], "unbounded_below");
    assert_eq!(r.manifest["overrides"]["link.beta"], "2.0");
    let (header, rows) = read_csv(&r.out.join("evidence_trace.csv"));
    assert_eq!(header, ["eps", "w", "b_norm"]);
    let w: Vec<f64> = rows.iter().map(|row| row[1].parse().unwrap()).collect();
    assert!(w.windows(2).all(|p| p[1] < p[0]));
}

#[test]
fn classify_unit_sphere_is_finite() {
    let d = TempDir::new().unwrap();
    let r = run(&d, "classify-cone", UNIT_S2, &[]);
    assert_eq!(r.code, 0);
    assert_eq!(r.result["verdict"], "mu_finite");
}

#[test]
fn hardy_extremal_ratio() {
    let d = TempDir::new().unwrap();
    let r = run(&d, "verify-inequalities", r#"{"inequality": "hardy", "n": 2}"#, &[]);
    assert_eq!(r.code, 0);
    assert!(num(&r.result["extremal_ratio"]) > 0.95);
    assert!(num(&r.result["worst_ratio"]) < 1.0);
    assert_eq!(r.result["holds"], true);
}

#[test]
fn log_sobolev_holds() {
    let d = TempDir::new().unwrap();
    let r = run(&d, "verify-inequalities", r#"{"inequality": "log_sobolev", "n": 3, "probes": 50}"#, &[]);
    assert_eq!(r.code, 0);
    assert!(num(&r.result["extremal_gap"]).abs() < 1e-5);
    assert_eq!(r.result["holds"], true);
}

#[test]
fn beta_scan_flips_at_sqrt_two() {
    let d = TempDir::new().unwrap();
    let input = r#"{"link": {"variant": "round_sphere", "dim": 2},
                    "grid": {"param": "link.beta", "start": 0.8, "stop": 2.0, "step": 0.1}}"#;
    let r = run(&d, "classify-cone", input, &["--jobs", "2"]);
    assert_eq!(r.code, 0);
    assert_eq!(r.result["rows"], 13);
    let (header, rows) = read_csv(&r.out.join("scan.csv"));
    assert_eq!(header.first().map(String::as_str), Some("link.beta"));
    assert_eq!(header.last().map(String::as_str), Some("status"));
    let verdict = header.iter().position(|h| h == "verdict").unwrap();
    let flips: Vec<f64> = rows
        .windows(2)
        .filter(|p| p[0][verdict] != p[1][verdict])
        .map(|p| p[0][0].parse::<f64>().unwrap())
        .collect();
    assert_eq!(flips.len(), 1);
    assert!(flips[0] < 2f64.sqrt() && flips[0] + 0.1 > 2f64.sqrt());
    assert_eq!(rows[0][verdict], "mu_finite");
}

#[test]
fn tau_grid_matches_closed_form() {
    let d = TempDir::new().unwrap();
    let input = r#"{"link": {"variant": "round_sphere", "dim": 2, "beta": 1.0},
                    "grid": {"param": "tau", "values": [0.25, 0.5, 1.0, 2.0, 4.0]}}"#;
    let r = run(&d, "mu", input, &[]);
    assert_eq!(r.code, 0);
    let (header, rows) = read_csv(&r.out.join("scan.csv"));
    let mu = header.iter().position(|h| h == "mu").unwrap();
    for row in &rows {
        let tau: f64 = row[0].parse().unwrap();
        let closed = 2.0 * tau - tau.ln() - 2.0;
        let got: f64 = row[mu].parse().unwrap();
        assert!((got - closed).abs() < 1e-3, "tau {tau}: {got} vs {closed}");
        assert_eq!(row.last().unwrap(), "ok");
    }
}

#[test]
fn empty_grid_writes_header_only() {
    let d = TempDir::new().unwrap();
    let input = r#"{"link": {"variant": "round_sphere", "dim": 2}, "grid": {"param": "link.beta", "values": []}}"#;
    let r = run(&d, "classify-cone", input, &[]);
    assert_eq!(r.code, 0);
    let text = fs::read_to_string(r.out.join("scan.csv")).unwrap();
    assert_eq!(text.lines().count(), 1);
    assert!(text.starts_with("link.beta,"));
}

#[test]
fn failed_rows_do_not_abort_scan() {
    let d = TempDir::new().unwrap();
    let input = r#"{"link": {"variant": "round_sphere", "dim": 2}, "grid": {"param": "link.beta", "values": [1.0, -1.0, 2.0]}}"#;
    let r = run(&d, "lambda", input, &[]);
    assert_eq!(r.code, 0);
    assert_eq!(r.result["failed_rows"], 1);
    let (_, rows) = read_csv(&r.out.join("scan.csv"));
    let status: Vec<&str> = rows.iter().map(|row| row.last().unwrap().as_str()).collect();
    assert_eq!(status[0], "ok");
    assert_ne!(status[1], "ok");
    assert_eq!(status[2], "ok");
}

#[test]
fn same_seed_same_bytes() {
    let d = TempDir::new().unwrap();
    let input = r#"{"inequality": "hardy", "n": 3, "probes": 30}"#;
    let a = run(&d, "verify-inequalities", input, &["--seed", "7"]);
    let b = run(&d, "verify-inequalities", input, &["--seed", "7", "--jobs", "1"]);
    let c = run(&d, "verify-inequalities", input, &["--seed", "8"]);
    let bytes = |r: &Run, f: &str| fs::read(r.out.join(f)).unwrap();
    assert_eq!(bytes(&a, "result.json"), bytes(&b, "result.json"));
    assert_eq!(bytes(&a, "margins.csv"), bytes(&b, "margins.csv"));
    assert_ne!(bytes(&a, "margins.csv"), bytes(&c, "margins.csv"));
}

fn assert_tolerances(v: &Value, path: &str) {
    if let Value::Object(m) = v {
        for (k, x) in m {
            if k.ends_with("_tol") {
                continue;
            }
            let numeric = x.is_number() || matches!(x.as_str(), Some("inf" | "-inf" | "nan"));
            if numeric {
                assert!(m.contains_key(&format!("{k}_tol")), "{path}.{k} has no tolerance");
            }
            assert_tolerances(x, &format!("{path}.{k}"));
        }
    }
}

#[test]
fn every_number_has_a_tolerance() {
    let d = TempDir::new().unwrap();
    let runs = [
        run(&d, "lambda", UNIT_S2, &[]),
        run(&d, "mu", UNIT_S2, &["--set", "tau=0.5"]),
        run(&d, "classify-cone", UNIT_S2, &["--set", "link.beta=2"]),
        run(&d, "envelope-check", UNIT_S2, &[]),
        run(&d, "verify-inequalities", r#"{"inequality": "hardy", "n": 2, "probes": 10}"#, &[]),
        run(&d, "flow", r#"{"link": {"variant": "round_sphere", "dim": 2}, "t_end": 0.02}"#, &[]),
    ];
    for r in &runs {
        assert_tolerances(&r.result, "result");
    }
}

#[test]
fn invalid_input_exits_two() {
    let d = TempDir::new().unwrap();
    let r = run(&d, "lambda", r#"{"variant": "round_sphere", "dim": 2, "bogus": 1}"#, &[]);
    assert_eq!(r.code, 2);
    assert_eq!(r.result["status"], "error");
    let r = run(&d, "lambda", "not json", &[]);
    assert_eq!(r.code, 2);
    let r = run(&d, "lambda", UNIT_S2, &["--set", "link.beta=-1"]);
    assert_eq!(r.code, 2);
}

#[test]
fn envelope_exact_on_closed_form() {
    let d = TempDir::new().unwrap();
    let r = run(&d, "envelope-check", UNIT_S2, &[]);
    assert_eq!(r.code, 0);
    assert!(num(&r.result["worst_violation"]) < 1e-3);
    assert!(num(&r.result["closed_form_worst_violation"]) < 1e-8);
}

#[test]
fn flow_writes_trajectory() {
    let d = TempDir::new().unwrap();
    let input = r#"{"link": {"variant": "round_sphere", "dim": 2}, "t_end": 0.05}"#;
    let r = run(&d, "flow", input, &["--grid-nodes", "33"]);
    assert_eq!(r.code, 0);
    let (header, rows) = read_csv(&r.out.join("trajectory.csv"));
    assert_eq!(header, ["t", "beta_sq", "vol", "F", "W", "sup_rm_times_t", "roundness"]);
    assert!(rows.len() >= 2);
    assert_eq!(r.manifest["grid_nodes"], 33);
}
