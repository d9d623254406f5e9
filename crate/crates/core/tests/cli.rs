use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

fn ergomesh(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ergomesh"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn small_config(dir: &Path) -> Value {
    json!({
        "mesh": {"kind": "icosphere", "level": 2, "radius": 0.5},
        "basis_size": 9,
        "sigma": 0.2,
        "horizon": 12,
        "dt": 0.2,
        "clearance": 0.05,
        "speed_limit": [1.0, 1.0, 1.0],
        "init": {"kind": "ring", "center": [0.0, 0.0, 0.0], "axis": [0.0, 0.3, 1.0], "radius": 0.65},
        "solver": {"outer_iters": 6, "inner": {"max_iters": 300}},
        "analytic": {"domain": {"kind": "sphere", "center": [0.0, 0.0, 0.0], "radius": 0.5}, "basis_size": 16, "quadrature": 24},
        "output_dir": dir.join("out"),
        "cache_dir": dir.join("cache"),
        "checkpoint_log": true,
    })
}

fn write_config(dir: &Path, cfg: &Value) -> String {
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    path.to_str().unwrap().to_string()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn plan_then_eval_reproduces_the_reported_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = write_config(dir.path(), &small_config(dir.path()));
    let out = ergomesh(&["plan", "--config", &cfg_path]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out_dir = dir.path().join("out");
    for f in ["trajectory.csv", "report.json", "coverage.ply", "checkpoints.jsonl"] {
        assert!(out_dir.join(f).exists(), "{f} missing");
    }
    let plan = read_json(&out_dir.join("report.json"));
    assert_eq!(plan["command"], "plan");
    assert!(plan["ergodic_metric"].as_f64().unwrap() < plan["initial_ergodic_metric"].as_f64().unwrap());

    // Checkpoints: one line per outer iteration, penalty never decreases.
    let lines = std::fs::read_to_string(out_dir.join("checkpoints.jsonl")).unwrap();
    let rhos: Vec<f64> = lines
        .lines()
        .map(|l| serde_json::from_str::<Value>(l).unwrap()["rho"].as_f64().unwrap())
        .collect();
    assert_eq!(rhos.len() as u64, plan["optimizer"]["outer_iterations"].as_u64().unwrap());
    assert!(rhos.windows(2).all(|w| w[1] >= w[0]), "{rhos:?}");

    let traj = out_dir.join("trajectory.csv");
    let eval_dir = dir.path().join("eval");
    let out = ergomesh(&[
        "eval",
        "--config",
        &cfg_path,
        "--trajectory",
        traj.to_str().unwrap(),
        "--output-dir",
        eval_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let eval = read_json(&eval_dir.join("report.json"));
    assert_eq!(eval["command"], "eval");
    for key in ["ergodic_metric", "analytic_metric"] {
        let a = plan[key].as_f64().unwrap();
        let b = eval[key].as_f64().unwrap();
        assert!((a - b).abs() <= 1e-12 * a.abs().max(1e-300) + 1e-15, "{key}: {a} vs {b}");
    }
    assert_eq!(plan["mesh_hash"], eval["mesh_hash"]);
    let va = &plan["violations"];
    let vb = &eval["violations"];
    for key in ["defect", "clearance", "bound"] {
        assert!((va[key].as_f64().unwrap() - vb[key].as_f64().unwrap()).abs() <= 1e-12, "{key}");
    }
}

#[test]
fn report_config_reruns_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(dir.path());
    cfg["solver"]["restarts"] = json!(1);
    let cfg_path = write_config(dir.path(), &cfg);
    let out = ergomesh(&["plan", "--config", &cfg_path, "--seed", "7"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = read_json(&dir.path().join("out/report.json"));
    assert_eq!(report["config"]["solver"]["seed"], 7);

    let mut echoed = report["config"].clone();
    echoed["output_dir"] = json!(dir.path().join("again"));
    let echoed_path = dir.path().join("echoed.json");
    std::fs::write(&echoed_path, echoed.to_string()).unwrap();
    let out = ergomesh(&["plan", "--config", echoed_path.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let a = std::fs::read(dir.path().join("out/trajectory.csv")).unwrap();
    let b = std::fs::read(dir.path().join("again/trajectory.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn spectrum_exports_eigenpairs() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("spec");
    let out = ergomesh(&[
        "spectrum",
        "--set",
        "mesh={\"kind\":\"icosphere\",\"level\":3,\"radius\":1.0}",
        "--set",
        "basis_size=4",
        "--output-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(out_dir.join("eigenvalues.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("index,eigenvalue"));
    let values: Vec<f64> = lines.map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    // l = 1 has three members, so four requested pairs stay at four.
    assert_eq!(values.len(), 4);
    assert!(values[0].abs() < 1e-8);
    assert!(values[1..].iter().all(|v| (v - 2.0).abs() < 0.05), "{values:?}");
    assert!(out_dir.join("eigenvectors.ply").exists());
}

#[test]
fn configuration_errors_exit_with_2() {
    let out = ergomesh(&["plan", "--preset", "no-such-preset"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown preset"));

    let out = ergomesh(&["plan", "--set", "sigma=-1"]);
    assert_eq!(out.status.code(), Some(2));

    let out = ergomesh(&["plan", "--set", "no_such_key=1"]);
    assert_eq!(out.status.code(), Some(2));

    let out = ergomesh(&["plan", "--set", "sigma"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_files_exit_with_4() {
    let out = ergomesh(&["plan", "--config", "/nonexistent/config.json"]);
    assert_eq!(out.status.code(), Some(4));

    let dir = tempfile::tempdir().unwrap();
    let cfg_path = write_config(dir.path(), &small_config(dir.path()));
    let out = ergomesh(&["eval", "--config", &cfg_path, "--trajectory", "/nonexistent/traj.csv"]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn missing_referenced_mesh_is_a_configuration_error() {
    let out = ergomesh(&["plan", "--set", "mesh={\"kind\":\"file\",\"path\":\"/nonexistent/m.obj\"}"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/m.obj"));
}

#[test]
fn degenerate_coverage_exits_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = write_config(dir.path(), &small_config(dir.path()));
    let traj = dir.path().join("far.csv");
    std::fs::write(&traj, "t,x,y,z\n0,500,0,0\n0.2,500,1,0\n").unwrap();
    let out = ergomesh(&["eval", "--config", &cfg_path, "--trajectory", traj.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("degenerate coverage"));
}
