use std::path::Path;
use std::process::{Command, Output};

use cookiewalk::cli::git_object_id;
use serde_json::Value;

fn cookiewalk(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cookiewalk")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, doc: &str) -> String {
    let p = dir.join("config.json");
    std::fs::write(&p, doc).unwrap();
    p.to_str().unwrap().to_string()
}

/// Splits a CSV line, honouring double-quoted fields.
fn split_csv(line: &str) -> Vec<String> {
    let (mut fields, mut cur, mut quoted) = (Vec::new(), String::new(), false);
    for ch in line.chars() {
        match ch {
            '"' => quoted = !quoted,
            ',' if !quoted => fields.push(std::mem::take(&mut cur)),
            _ => cur.push(ch),
        }
    }
    fields.push(cur);
    fields
}

fn csv_column(csv: &str, name: &str) -> Vec<String> {
    let mut lines = csv.lines();
    let header = split_csv(lines.next().unwrap());
    let j = header.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name} in {header:?}"));
    lines.map(|l| split_csv(l)[j].clone()).collect()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn verify_operators_defaults_pass() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ops");
    let o = cookiewalk(&["--experiment", "verify-operators", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("results.csv")).unwrap();
    let residuals = csv_column(&csv, "max_residual");
    assert!(!residuals.is_empty());
    for r in residuals {
        assert!(r.parse::<f64>().unwrap() <= 1e-10, "residual {r}");
    }
    let report = read_json(&out.join("report.json"));
    assert_eq!(report["passed"], Value::Bool(true));
}

#[test]
fn critical_gw_closed_form_column() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"experiment": "gw-check", "gw_p": 0.5, "gw_initial": 1, "gw_k": 40, "reps": 2000}"#);
    let out = dir.path().join("gw");
    let o = cookiewalk(&["--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let csv = std::fs::read_to_string(out.join("results.csv")).unwrap();
    let ks = csv_column(&csv, "k");
    let closed = csv_column(&csv, "closed_form");
    assert_eq!(ks.len(), 40);
    for (k, c) in ks.iter().zip(&closed) {
        let k: f64 = k.parse().unwrap();
        let c: f64 = c.parse().unwrap();
        assert!((c - k / (k + 1.0)).abs() < 1e-12, "k = {k}: {c}");
    }
}

#[test]
fn unknown_experiment_is_a_usage_error() {
    let o = cookiewalk(&["--experiment", "no-such-thing"]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("`experiment`"), "{err}");
    assert!(err.contains("usage:"), "{err}");
    assert!(err.contains("verify-operators"), "{err}");
}

#[test]
fn bad_field_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"experiment": "drift-sweep", "dx": "small"}"#);
    let o = cookiewalk(&["--config", &cfg]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("`dx`"));

    let cfg = write_config(dir.path(), r#"{"experiment": "drift-sweep", "bogus": 1}"#);
    let o = cookiewalk(&["--config", &cfg]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("`bogus`"));

    let cfg = write_config(dir.path(), r#"{"experiment": "drift-sweep", "reps": 1}"#);
    let o = cookiewalk(&["--config", &cfg]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("`reps`"));
}

#[test]
fn missing_config_file_fails() {
    let o = cookiewalk(&["--config", "/nonexistent/config.json"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn failed_threshold_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"experiment": "verify-operators", "threshold": 1e-300}"#);
    let out = dir.path().join("strict");
    let o = cookiewalk(&["--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL"));
    // outputs are still written
    assert_eq!(read_json(&out.join("manifest.json"))["passed"], Value::Bool(false));
}

#[test]
fn results_do_not_depend_on_threads() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"experiment": "chains-vs-walk", "n_list": [5, 10], "reps": 500}"#);
    let mut csvs = Vec::new();
    for t in ["1", "4"] {
        let out = dir.path().join(format!("t{t}"));
        let o = cookiewalk(&["--config", &cfg, "--threads", t, "--seed", "99", "--out", out.to_str().unwrap()]);
        assert!(matches!(o.status.code(), Some(0 | 2)), "{}", String::from_utf8_lossy(&o.stderr));
        csvs.push(std::fs::read(out.join("results.csv")).unwrap());
        assert_eq!(read_json(&out.join("manifest.json"))["threads"], Value::from(t.parse::<u64>().unwrap()));
    }
    assert_eq!(csvs[0], csvs[1]);
}

#[test]
fn manifest_hashes_match_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("rec");
    let o = cookiewalk(&["--experiment", "recurrence", "--seed", "7", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let m = read_json(&out.join("manifest.json"));
    assert_eq!(m["master_seed"], Value::from(7u64));
    assert_eq!(m["config"]["experiment"], Value::from("recurrence"));
    let outputs = m["outputs"].as_array().unwrap();
    assert_eq!(outputs.len(), 2);
    let mut listing = String::new();
    for f in outputs {
        let name = f["file"].as_str().unwrap();
        let bytes = std::fs::read(out.join(name)).unwrap();
        assert_eq!(f["bytes"], Value::from(bytes.len()));
        assert_eq!(f["object_id"].as_str().unwrap(), git_object_id(&bytes));
        listing.push_str(&format!("{}  {name}\n", git_object_id(&bytes)));
    }
    use sha2::{Digest, Sha256};
    assert_eq!(m["content_hash"].as_str().unwrap(), format!("{:x}", Sha256::digest(listing.as_bytes())));
}

#[test]
fn empty_blob_id_matches_git() {
    // id of the empty blob in a sha256 git repository
    assert_eq!(git_object_id(b""), "473a0f4c3be8a93681a267e3b1e9a7dcda1185436fe141f7749120a303721813");
}
