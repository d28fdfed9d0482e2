use std::path::Path;
use std::process::{Command, Output};

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dephasing")).args(args).output().unwrap()
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn steady_writes_csv_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = cli(&["steady", "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = read_json(&dir.path().join("summary.json"));
    assert_eq!(summary["kind"], "steady");
    assert!(summary["invariants"].as_array().unwrap().iter().all(|c| c["passed"] == true));
    assert!(dir.path().join("steady.csv").exists());
    assert!(dir.path().join("steady_density.json").exists());
}

#[test]
fn config_file_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("cfg.json");
    std::fs::write(&config, r#"{"kind": "evolve", "lattice": {"n_sites": 3}, "time_grid": {"times": [0, 1, 2]}}"#).unwrap();
    let out_dir = dir.path().join("out");
    let out = cli(&[
        "evolve",
        "--config",
        config.to_str().unwrap(),
        "--override",
        "lattice.dephasing_gamma=3",
        "--override",
        "observables=[{\"type\":\"density\",\"site\":2}]",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = read_json(&out_dir.join("summary.json"));
    assert_eq!(summary["config"]["lattice"]["dephasing_gamma"], 3.0);
    let csv = std::fs::read_to_string(out_dir.join("trajectory.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "t,n_2");
    assert_eq!(lines.len(), 4);
}

#[test]
fn invalid_config_exits_with_field_message() {
    let dir = tempfile::tempdir().unwrap();
    let out = cli(&["steady", "--override", "lattice.n_sites=4", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("n_sites"));
    let out = cli(&["steady", "--override", "nonsense", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn invariant_violation_exits_nonzero() {
    // A loose integrator with a strict steady tolerance cannot converge; the
    // solver error surfaces verbatim.
    let dir = tempfile::tempdir().unwrap();
    let out = cli(&[
        "steady",
        "--override",
        "solver.method=adaptive",
        "--override",
        "solver.steady_tolerance=1e-30",
        "--override",
        "solver.t_max=50",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_ne!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no steady state"));
}

#[test]
fn checked_in_configs_match_defaults() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for kind in ["evolve", "steady", "correlation-map", "concurrence-scan", "fock-quench", "robustness-aa", "robustness-int"] {
        let file = read_json(&root.join(format!("{kind}.json")));
        let out = cli(&["defaults", kind]);
        assert!(out.status.success());
        let defaults: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
        assert_eq!(file, defaults, "{kind}");
    }
}

#[test]
fn published_schema_is_current() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/config.schema.json");
    let out = cli(&["schema"]);
    assert!(out.status.success());
    let printed: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(read_json(&path), printed);
}
