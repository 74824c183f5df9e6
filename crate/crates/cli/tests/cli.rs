use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use kalikow::NodeId;
use kalikow_cli::emit::read_points;
use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_kalikow"))
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const POISSON: &str = r#"{"model": {"family": "constant", "rate": 1.0}, "simulation": {"t_max": 50}}"#;

const AGE: &str = r#"{
  "model": {
    "family": "age", "nodes": [0],
    "rate": {"kind": "affine", "offset": 1.0, "slope": 1.0},
    "kernels": [{"target": 0, "source": 0, "kind": "exponential", "scale": 0.5, "rate": 4.0}],
    "delta": 0.25
  },
  "simulation": {"t_max": 5.0}
}"#;

/// Two nodes, each with one neighborhood covering a unit interval of each
/// node, so that `M = [[0.2, 0.3], [0.1, 0.4]]`.
const TWO_NODE: &str = r#"{
  "model": {
    "family": "table",
    "nodes": [
      {"node": 0, "bound": 1.0, "component": {"kind": "constant", "value": 0.5}},
      {"node": 1, "bound": 1.0, "component": {"kind": "constant", "value": 0.5}}
    ],
    "weights": {"kind": "listed", "entries": [
      {"node": 0, "weight": 0.5, "pieces": []},
      {"node": 0, "weight": 0.5, "pieces": [{"node": 0, "start": -0.4, "end": 0}, {"node": 1, "start": -0.6, "end": 0}]},
      {"node": 1, "weight": 0.5, "pieces": []},
      {"node": 1, "weight": 0.5, "pieces": [{"node": 0, "start": -0.2, "end": 0}, {"node": 1, "start": -0.8, "end": 0}]}
    ]}
  }
}"#;

#[test]
fn forward_writes_sorted_points_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", POISSON);
    let out = dir.path().join("pts.csv");
    let o = run(&["simulate-forward", "--config", cfg.to_str().unwrap(), "--seed", "4", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let pts = read_points(&out).unwrap();
    assert!(!pts.is_empty());
    assert!(pts.windows(2).all(|w| w[0].0 <= w[1].0));
    assert!(pts.iter().all(|&(t, n)| (0.0..=50.0).contains(&t) && n == NodeId(0)));
    let s: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("pts.summary.json")).unwrap()).unwrap();
    assert_eq!(s["runs"][0]["count"], pts.len());
    assert_eq!(s["runs"][0]["seed"], 4);
}

#[test]
fn fixed_seed_is_bit_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", AGE);
    let mut files = Vec::new();
    for k in 0..2 {
        let out = dir.path().join(format!("run{k}.csv"));
        let o = run(&["simulate-perfect", "--config", cfg.to_str().unwrap(), "--seed", "12", "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
        files.push(std::fs::read(&out).unwrap());
    }
    assert_eq!(files[0], files[1]);
    let o = run(&["simulate-perfect", "--config", cfg.to_str().unwrap(), "--seed", "13", "--out", dir.path().join("other.csv").to_str().unwrap()]);
    assert!(o.status.success());
    assert_ne!(std::fs::read(dir.path().join("other.csv")).unwrap(), files[0]);
}

#[test]
fn perfect_batch_emits_one_file_per_run_and_ledgers() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", AGE);
    let out = dir.path().join("age.csv");
    let ledger = dir.path().join("ledger.json");
    let o = run(&[
        "simulate-perfect", "--config", cfg.to_str().unwrap(), "--runs", "3", "--out", out.to_str().unwrap(),
        "--dump-ledger", ledger.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    for k in 0..3 {
        let pts = read_points(&dir.path().join(format!("age-{k}.csv"))).unwrap();
        // refractory period 0.25
        assert!(pts.windows(2).all(|w| w[1].0 - w[0].0 > 0.25));
        let l: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join(format!("ledger-{k}.json"))).unwrap()).unwrap();
        assert!(l["nodes"]["0"]["segments"].is_array());
    }
    let s: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("age.summary.json")).unwrap()).unwrap();
    let runs = s["runs"].as_array().unwrap();
    assert_eq!(runs.len(), 3);
    let streams: Vec<&Value> = runs.iter().map(|r| &r["stream"]).collect();
    assert_eq!(streams[2][0], 2);
    assert_eq!(s["completed"], 3);
    assert!(s["clan_size_histogram"].is_object());
    assert!(s["lookback"]["count"].as_u64().unwrap() > 0);
}

#[test]
fn config_violations_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "bad.json",
        r#"{"model": {"family": "linear", "baseline": {"0": 1.0}, "epsilon": -0.1}, "simulation": {"t_max": 0}}"#,
    );
    let o = run(&["simulate-forward", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let e = stderr(&o);
    assert!(e.contains("model.epsilon") && e.contains("simulation.t_max"), "{e}");

    let cfg = write(dir.path(), "unknown.json", r#"{"model": {"family": "hawkes-ish"}}"#);
    let o = run(&["analyze", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("hawkes-ish"));

    let o = run(&["analyze", "--config", dir.path().join("missing.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn perfect_rejects_unbounded_families() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "lin.json",
        r#"{"model": {"family": "linear", "baseline": {"0": 1.0},
            "kernels": [{"target": 0, "source": 0, "kind": "exponential", "scale": 0.5, "rate": 1.0}],
            "epsilon": 0.5, "bin_ratio": 0.7}}"#,
    );
    let o = run(&["simulate-perfect", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("x.csv").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("bound"));
}

#[test]
fn analyze_reports_matrix_and_clan_size() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "two.json", TWO_NODE);
    let out = dir.path().join("report.json");
    let o = run(&["analyze", "--config", cfg.to_str().unwrap(), "--theta", "0.001", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let m = &r["branching"]["matrix"];
    let want = [[0.2, 0.3], [0.1, 0.4]];
    for a in 0..2 {
        for b in 0..2 {
            assert!((m[a][b].as_f64().unwrap() - want[a][b]).abs() < 1e-12);
        }
    }
    assert!((r["branching"]["gamma"].as_f64().unwrap() - 0.5).abs() < 1e-12);
    assert!((r["branching"]["expected_w"][0].as_f64().unwrap() - 2.0).abs() < 1e-12);
    assert_eq!(r["branching"]["verdict"], "subcritical");
    assert!(r["fixed_point"]["residual"].as_f64().unwrap() < 1e-12);
    // d Φ / d θ at 0 is (I - M)^{-1} = [[4/3, 2/3], [2/9, 16/9]]
    let j = &r["fixed_point"]["jacobian_at_zero"];
    let inv = [[4.0 / 3.0, 2.0 / 3.0], [2.0 / 9.0, 16.0 / 9.0]];
    for a in 0..2 {
        for b in 0..2 {
            let got = j[a][b].as_f64().unwrap();
            assert!((got - inv[a][b]).abs() < 1e-5 * inv[a][b], "{a}{b}: {got}");
        }
    }
}

#[test]
fn analyze_lattice_cost_curve() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "lat.json", r#"{"model": {"family": "lattice", "delta": 0.005}}"#);
    let o = run(&["analyze", "--config", cfg.to_str().unwrap(), "--invariant", "--p-grid", "3.2,3.6,4"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(r["family"], "lattice");
    assert_eq!(r["branching"]["reduction"], "translation-invariant");
    assert_eq!(r["cost_curve"]["argmin"], 4.0);
    let o = run(&["analyze", "--config", cfg.to_str().unwrap(), "--p-grid", "3"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn validate_reports_and_lists_suites() {
    let o = run(&["validate", "weight-choice"]);
    assert!(o.status.success());
    let line = String::from_utf8_lossy(&o.stdout);
    assert!(line.contains("PASS") && line.contains("weight-choice"), "{line}");

    let o = run(&["validate", "no-such-suite"]);
    assert_eq!(o.status.code(), Some(2));
    let e = stderr(&o);
    assert!(e.contains("poisson-sanity") && e.contains("stationarity"), "{e}");
}
