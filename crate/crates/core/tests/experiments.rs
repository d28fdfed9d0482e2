use dephasing::experiment::{emit_plot_data, run, ExperimentConfig, ExperimentKind, InitialState, Observable, QuenchTime, ScanSpec, SizeScan, TimeGrid};

fn assemble(kind: ExperimentKind, overrides: &[&str]) -> ExperimentConfig {
    let o: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
    ExperimentConfig::assemble(kind, None, &o).unwrap()
}

#[test]
fn steady_three_site_summary() {
    let out = run(&ExperimentConfig::default_for(ExperimentKind::Steady)).unwrap();
    assert!(out.summary.invariants_hold());
    let obs = &out.summary.results["observables"];
    assert!((obs["n_2"].as_f64().unwrap() - 0.5).abs() < 1e-7);
    assert!((obs["n_1"].as_f64().unwrap() - 0.25).abs() < 1e-7);
    assert!((obs["conc_1_3"].as_f64().unwrap() - 0.5).abs() < 1e-7);
    let diag = out.summary.results["diagonal"].as_array().unwrap();
    assert_eq!(diag[1]["state"], "010");
    assert!((diag[1]["population"].as_f64().unwrap() - 0.5).abs() < 1e-7);
}

#[test]
fn closed_shell_pair_is_maximally_entangled() {
    let mut cfg = ExperimentConfig::default_for(ExperimentKind::ConcurrenceScan);
    cfg.sizes = Some(SizeScan { sizes: vec![3], fillings: vec![2] });
    let out = run(&cfg).unwrap();
    let t = out.table("concurrence_scan").unwrap();
    assert_eq!(t.rows.len(), 1);
    assert!((t.rows[0][3] - 1.0).abs() < 1e-7);
}

#[test]
fn scan_skips_overfilled_sizes() {
    let mut cfg = ExperimentConfig::default_for(ExperimentKind::ConcurrenceScan);
    cfg.sizes = Some(SizeScan { sizes: vec![3, 5], fillings: vec![1, 3] });
    let out = run(&cfg).unwrap();
    let t = out.table("concurrence_scan").unwrap();
    let cases: Vec<(f64, f64)> = t.rows.iter().map(|r| (r[0], r[1])).collect();
    assert!(!cases.contains(&(3.0, 3.0)));
    assert!(cases.contains(&(5.0, 3.0)));
    assert_eq!(out.summary.results["skipped"].as_array().unwrap().len(), 1);
}

#[test]
fn zero_time_grid_returns_initial_observables() {
    let cfg = assemble(ExperimentKind::Evolve, &["lattice.n_sites=5", "time_grid={\"times\":[0]}", "observables=[{\"type\":\"correlation\",\"i\":1,\"j\":5}]"]);
    let out = run(&cfg).unwrap();
    let t = out.table("trajectory").unwrap();
    assert_eq!(t.rows.len(), 1);
    // The ground state of a bare chain has real end-to-end amplitude
    // ψ_1 ψ_5 = sin²(π/6)/3.
    let re = t.column("re_c_1_5").unwrap()[0];
    let want = (std::f64::consts::PI / 6.0).sin().powi(2) / 3.0;
    assert!((re - want).abs() < 1e-12, "{re} vs {want}");
}

#[test]
fn evolve_from_fock_state_conserves_density() {
    let mut cfg = ExperimentConfig::default_for(ExperimentKind::Evolve);
    cfg.lattice.n_sites = 5;
    cfg.n_particles = 2;
    cfg.initial_state = InitialState::Fock { bitstring: "10001".into() };
    cfg.time_grid = Some(TimeGrid::Uniform { t_end: 5.0, points: 11 });
    cfg.observables = (1..=5).map(|site| Observable::Density { site }).chain([Observable::Charge, Observable::Purity]).collect();
    let out = run(&cfg).unwrap();
    assert!(out.summary.invariants_hold());
    let t = out.table("trajectory").unwrap();
    for row in &t.rows {
        let total: f64 = row[1..=5].iter().sum();
        assert!((total - 2.0).abs() < 1e-9);
    }
    let purity = t.column("purity").unwrap();
    assert!((purity[0] - 1.0).abs() < 1e-12);
    assert!(purity.last().unwrap() < &1.0);
}

#[test]
fn correlation_map_grid() {
    let cfg = assemble(ExperimentKind::CorrelationMap, &["lattice.n_sites=5", "initial_state.bitstring=00100"]);
    let out = run(&cfg).unwrap();
    let t = out.table("correlation_map").unwrap();
    assert_eq!(t.rows.len(), 25);
    for row in &t.rows {
        let (i, j) = (row[0] as usize, row[1] as usize);
        let want = match (i, j) {
            (3, 3) => 1.0 / 3.0,
            _ if i == j || i + j == 6 => 1.0 / 6.0,
            _ => 0.0,
        };
        assert!((row[2] - want).abs() < 1e-7 && row[3].abs() < 1e-7, "({i},{j}) = {}", row[2]);
    }
}

#[test]
fn quench_marks_two_segments() {
    let mut cfg = ExperimentConfig::default_for(ExperimentKind::FockQuench);
    cfg.lattice.n_sites = 5;
    cfg.n_particles = 3;
    cfg.initial_state = InitialState::Fock { bitstring: "10101".into() };
    cfg.time_grid = Some(TimeGrid::Uniform { t_end: 10.0, points: 21 });
    cfg.observables = vec![Observable::Correlation { i: 1, j: 5 }];
    cfg.quench.as_mut().unwrap().time = QuenchTime::At(4.25);
    let out = run(&cfg).unwrap();
    let t = out.table("fock_quench").unwrap();
    let times = t.column("t").unwrap();
    let flag = t.column("quenched").unwrap();
    assert_eq!(times.len(), 22);
    let k = times.iter().position(|&x| x == 4.25).unwrap();
    assert!(flag[..=k].iter().all(|&f| f == 0.0));
    assert!(flag[k + 1..].iter().all(|&f| f == 1.0));
    // Identical before the quench.
    let a = t.column("abs_c_1_5").unwrap();
    let b = t.column("abs_c_1_5_free").unwrap();
    for j in 0..=k {
        assert!((a[j] - b[j]).abs() < 1e-12);
    }
    assert!((0..times.len()).skip(k + 2).any(|j| (a[j] - b[j]).abs() > 1e-6));
}

#[test]
fn quench_time_outside_grid_is_rejected() {
    let mut cfg = ExperimentConfig::default_for(ExperimentKind::FockQuench);
    cfg.quench.as_mut().unwrap().time = QuenchTime::At(100.0);
    assert!(run(&cfg).unwrap_err().to_string().contains("quench.time"));
}

#[test]
fn robustness_zero_amplitude_matches_bare_chain() {
    let mut cfg = ExperimentConfig::default_for(ExperimentKind::RobustnessAa);
    cfg.lattice.n_sites = 5;
    cfg.initial_state = InitialState::Fock { bitstring: "00100".into() };
    cfg.scan = Some(ScanSpec { min: 0.0, max: 0.2, points: 3, times: vec![400.0] });
    let out = run(&cfg).unwrap();
    let t = out.table("robustness_aa").unwrap();
    assert_eq!(t.rows.len(), 3);
    assert!((t.rows[0][2] - 1.0 / 3.0).abs() < 1e-7);
    assert!(t.rows[2][2] < t.rows[0][2]);
    assert_eq!(out.summary.results["fits"].as_array().unwrap().len(), 1);
}

#[test]
fn identical_configs_give_identical_outputs() {
    let mut cfg = ExperimentConfig::default_for(ExperimentKind::RobustnessInt);
    cfg.lattice.n_sites = 5;
    cfg.n_particles = 3;
    cfg.initial_state = InitialState::Fock { bitstring: "10101".into() };
    cfg.scan = Some(ScanSpec { min: 0.0, max: 0.2, points: 4, times: vec![3.0, 6.0] });
    let a = run(&cfg).unwrap();
    let b = run(&cfg).unwrap();
    assert_eq!(a.tables, b.tables);
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    emit_plot_data(&a, dir_a.path()).unwrap();
    emit_plot_data(&b, dir_b.path()).unwrap();
    for name in ["robustness_int.csv", "summary.json"] {
        let x = std::fs::read(dir_a.path().join(name)).unwrap();
        let y = std::fs::read(dir_b.path().join(name)).unwrap();
        assert_eq!(x, y, "{name}");
    }
}

#[test]
fn emitted_summary_round_trips_config() {
    let cfg = assemble(ExperimentKind::Steady, &["lattice.dephasing_gamma=2.5"]);
    let out = run(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let files = emit_plot_data(&out, dir.path()).unwrap();
    assert_eq!(files.len(), 3);
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    let back: ExperimentConfig = serde_json::from_value(summary["config"].clone()).unwrap();
    assert_eq!(back, cfg);
    assert_eq!(summary["files"].as_array().unwrap().len(), 3);
    let csv = std::fs::read_to_string(dir.path().join("steady.csv")).unwrap();
    assert!(csv.starts_with("t,re_c_1_3,im_c_1_3,abs_c_1_3,conc_1_3") || csv.starts_with("t,n_1"));
}

#[test]
fn reduced_and_full_sector_agree() {
    let mut cfg = ExperimentConfig::default_for(ExperimentKind::ConcurrenceScan);
    cfg.sizes = Some(SizeScan { sizes: vec![5], fillings: vec![2] });
    cfg.solver.steady_tolerance = 1e-12;
    let reduced = run(&cfg).unwrap();
    cfg.solver.reduce_sector = false;
    let full = run(&cfg).unwrap();
    let a = &reduced.table("concurrence_scan").unwrap().rows;
    let b = &full.table("concurrence_scan").unwrap().rows;
    // The pair state has a vanishing double-occupancy weight; rounding noise
    // there enters the concurrence through a square root.
    for (x, y) in a.iter().zip(b) {
        assert!((x[3] - y[3]).abs() < 1e-6);
    }
}
