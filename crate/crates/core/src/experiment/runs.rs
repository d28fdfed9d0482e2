use nalgebra::{DMatrix, DVector};
use serde_json::{json, Map, Value};

use super::config::{ExperimentConfig, InitialState, ModeParity, Observable, QuenchTime, SolverMethod, SolverSpec};
use super::{Check, RunOutput, Summary, Table};
use crate::entangle::{concurrence, negativity, reduce_to_pair};
use crate::error::{Error, Result};
use crate::fastpath::CorrelationMatrix;
use crate::fock::{
    bilinear_operator, build_many_body_hamiltonian, charge_operator, charge_sectors, number_operator, parity_slater_isometry,
    slater_state, fock_state, ChargeSector, ManyBodyBasis, OperatorMatrix,
};
use crate::lindblad::{
    build_liouvillian, evolve_with, steady_state_by_integration, AdaptiveTolerances, DensityMatrix, DensitySnapshot, EvolutionMethod,
    Liouvillian, SteadyState, SteadyStateOptions,
};
use crate::linalg::C64;
use crate::model::{build_single_particle_hamiltonian, classify_mode_parity, eigenmodes, reflection_matrix, LatticeSpec, Parity};

/// Sectors with at most this many states use the exact exponential under
/// [`SolverMethod::Auto`].
const EXACT_AUTO_DIM: usize = 12;

/// A fixed-number sector, optionally restricted to an invariant subspace
/// spanned by the columns of `isometry`.
struct Sector {
    basis: ManyBodyBasis,
    isometry: Option<DMatrix<C64>>,
    liouvillian: Liouvillian,
}

impl Sector {
    fn new(spec: &LatticeSpec, basis: ManyBodyBasis, isometry: Option<DMatrix<C64>>) -> Result<Self> {
        let h = build_many_body_hamiltonian(spec, &basis, true)?;
        let l = number_operator(&basis, spec.central_site())?;
        let liouvillian = match &isometry {
            Some(v) => build_liouvillian(&h.project(v), spec.dephasing_gamma, &l.project(v))?,
            None => build_liouvillian(&h, spec.dephasing_gamma, &l)?,
        };
        Ok(Self { basis, isometry, liouvillian })
    }

    fn dim(&self) -> usize {
        self.liouvillian.dim()
    }

    fn restrict(&self, rho: &DensityMatrix) -> DensityMatrix {
        match &self.isometry {
            Some(v) => rho.restrict(v),
            None => rho.clone(),
        }
    }

    fn full(&self, rho: &DensityMatrix) -> DensityMatrix {
        match &self.isometry {
            Some(v) => rho.lift(v),
            None => rho.clone(),
        }
    }

    fn residual(&self, rho: &DensityMatrix) -> f64 {
        self.liouvillian.residual(rho.matrix())
    }
}

fn evolution_method(solver: &SolverSpec, dim: usize) -> EvolutionMethod {
    let adaptive = EvolutionMethod::Adaptive(AdaptiveTolerances { rtol: solver.rtol, atol: solver.atol, max_step: f64::INFINITY });
    match solver.method {
        SolverMethod::Exact => EvolutionMethod::ExactExponential,
        SolverMethod::Adaptive => adaptive,
        SolverMethod::Auto if dim <= EXACT_AUTO_DIM => EvolutionMethod::ExactExponential,
        SolverMethod::Auto => adaptive,
    }
}

fn steady_options(solver: &SolverSpec, dim: usize) -> SteadyStateOptions {
    SteadyStateOptions {
        convergence_tol: solver.steady_tolerance,
        t_max: solver.t_max,
        check_interval: 1.0,
        method: evolution_method(solver, dim),
    }
}

fn lowest_modes(spec: &LatticeSpec, n_particles: usize, parity: Option<ModeParity>) -> Result<(crate::model::SingleParticleModes, Vec<usize>)> {
    let h = build_single_particle_hamiltonian(spec, true)?;
    match parity {
        None => Ok((eigenmodes(&h), (0..n_particles).collect())),
        Some(p) => {
            let classes = classify_mode_parity(&h, &reflection_matrix(spec.n_sites))?;
            let pool = match p {
                ModeParity::Even => &classes.even,
                ModeParity::Odd => &classes.odd,
            };
            if n_particles > pool.len() {
                return Err(Error::ParticlesOutOfRange { sites: pool.len(), particles: n_particles });
            }
            Ok((classes.modes.clone(), pool[..n_particles].to_vec()))
        }
    }
}

/// Initial state vector on the full sector.
fn initial_vector(state: &InitialState, spec: &LatticeSpec, basis: &ManyBodyBasis) -> Result<DVector<C64>> {
    let np = basis.n_particles();
    match state {
        InitialState::Fock { bitstring } => fock_state(basis, bitstring),
        InitialState::Slater { modes } => {
            let h = build_single_particle_hamiltonian(spec, true)?;
            slater_state(basis, &eigenmodes(&h), modes)
        }
        InitialState::GroundState => {
            let (modes, picks) = lowest_modes(spec, np, None)?;
            slater_state(basis, &modes, &picks)
        }
        InitialState::ParityModes { parity } => {
            let (modes, picks) = lowest_modes(spec, np, Some(*parity))?;
            slater_state(basis, &modes, &picks)
        }
    }
}

/// Invariant subspace for a parity-mode input: all Slater states built from
/// modes of that parity, which is one eigenspace of the hidden charge.
fn parity_isometry(state: &InitialState, spec: &LatticeSpec, basis: &ManyBodyBasis, solver: &SolverSpec) -> Result<Option<DMatrix<C64>>> {
    let InitialState::ParityModes { parity } = state else {
        return Ok(None);
    };
    if !solver.reduce_sector {
        return Ok(None);
    }
    let h = build_single_particle_hamiltonian(spec, true)?;
    let classes = classify_mode_parity(&h, &reflection_matrix(spec.n_sites))?;
    let p = match parity {
        ModeParity::Even => Parity::Even,
        ModeParity::Odd => Parity::Odd,
    };
    Ok(Some(parity_slater_isometry(basis, &classes, p)?))
}

struct Setup {
    sector: Sector,
    rho0: DensityMatrix,
}

fn setup(config: &ExperimentConfig, spec: &LatticeSpec, n_particles: usize) -> Result<Setup> {
    let basis = ManyBodyBasis::new(spec.n_sites, n_particles)?;
    let psi = initial_vector(&config.initial_state, spec, &basis)?;
    let isometry = parity_isometry(&config.initial_state, spec, &basis, &config.solver)?;
    let sector = Sector::new(spec, basis, isometry)?;
    let rho0 = sector.restrict(&DensityMatrix::from_pure(&psi));
    Ok(Setup { sector, rho0 })
}

enum Probe {
    Density(OperatorMatrix),
    Correlation(OperatorMatrix),
    Concurrence(usize, usize),
    Negativity(usize, usize),
    Charge(OperatorMatrix),
    Purity,
    Residual,
}

fn ordered(i: usize, j: usize) -> (usize, usize) {
    (i.min(j) - 1, i.max(j) - 1)
}

fn probes(observables: &[Observable], basis: &ManyBodyBasis) -> Result<Vec<Probe>> {
    observables
        .iter()
        .map(|obs| {
            Ok(match *obs {
                Observable::Density { site } => Probe::Density(number_operator(basis, site - 1)?),
                Observable::Correlation { i, j } => Probe::Correlation(bilinear_operator(basis, i - 1, j - 1)?),
                Observable::Concurrence { i, j } => {
                    let (a, b) = ordered(i, j);
                    Probe::Concurrence(a, b)
                }
                Observable::Negativity { i, j } => {
                    let (a, b) = ordered(i, j);
                    Probe::Negativity(a, b)
                }
                Observable::Charge => Probe::Charge(charge_operator(basis)),
                Observable::Purity => Probe::Purity,
                Observable::Residual => Probe::Residual,
            })
        })
        .collect()
}

fn headers(observables: &[Observable]) -> Vec<String> {
    observables.iter().flat_map(|o| o.columns()).collect()
}

/// Evaluates the probes on a full-sector state; `residual` is computed only
/// when requested.
fn measure(probes: &[Probe], basis: &ManyBodyBasis, rho: &DensityMatrix, residual: impl Fn() -> f64) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for p in probes {
        match p {
            Probe::Density(op) => out.push(rho.expectation(op).re),
            Probe::Correlation(op) => {
                let z = rho.expectation(op);
                out.extend([z.re, z.im, z.norm()]);
            }
            Probe::Concurrence(i, j) => out.push(concurrence(&reduce_to_pair(rho, basis, *i, *j)?)),
            Probe::Negativity(i, j) => out.push(negativity(&reduce_to_pair(rho, basis, *i, *j)?)),
            Probe::Charge(op) => out.push(rho.expectation(op).re),
            Probe::Purity => out.push(rho.purity()),
            Probe::Residual => out.push(residual()),
        }
    }
    Ok(out)
}

/// Tracks validity and conservation along a trajectory.
struct Monitor {
    sectors: Vec<ChargeSector>,
    charge: Option<OperatorMatrix>,
    initial: Option<(f64, Vec<f64>)>,
    trace: f64,
    hermiticity: f64,
    min_eigenvalue: f64,
    charge_drift: f64,
    sector_drift: f64,
}

impl Monitor {
    /// Charge checks are enabled only when the hidden charge commutes with
    /// the Hamiltonian (the jump always commutes with it).
    fn new(spec: &LatticeSpec, basis: &ManyBodyBasis) -> Result<Self> {
        let h = build_many_body_hamiltonian(spec, basis, true)?;
        let c = charge_operator(basis);
        let symmetric = h.commutator_norm(&c) < 1e-10 * h.to_dense().norm().max(1.0);
        Ok(Self {
            sectors: if symmetric { charge_sectors(basis) } else { Vec::new() },
            charge: symmetric.then_some(c),
            initial: None,
            trace: 0.0,
            hermiticity: 0.0,
            min_eigenvalue: f64::INFINITY,
            charge_drift: 0.0,
            sector_drift: 0.0,
        })
    }

    fn observe(&mut self, rho: &DensityMatrix) {
        self.trace = self.trace.max((rho.trace() - C64::new(1.0, 0.0)).norm());
        self.hermiticity = self.hermiticity.max(rho.hermiticity_error());
        self.min_eigenvalue = self.min_eigenvalue.min(rho.min_eigenvalue());
        let Some(c) = &self.charge else {
            return;
        };
        let q = rho.expectation(c).re;
        let weights: Vec<f64> = self.sectors.iter().map(|s| s.weight(rho.matrix())).collect();
        match &self.initial {
            None => self.initial = Some((q, weights)),
            Some((q0, w0)) => {
                self.charge_drift = self.charge_drift.max((q - q0).abs());
                let d = weights.iter().zip(w0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                self.sector_drift = self.sector_drift.max(d);
            }
        }
    }

    fn checks(&self) -> Vec<Check> {
        let mut out = vec![
            Check::at_most("trace_error", self.trace, 1e-9),
            Check::at_most("hermiticity_error", self.hermiticity, 1e-10),
            Check::at_least("min_eigenvalue", self.min_eigenvalue, -1e-8),
        ];
        if self.charge.is_some() {
            out.push(Check::at_most("charge_drift", self.charge_drift, 1e-8));
            out.push(Check::at_most("charge_sector_weight_drift", self.sector_drift, 1e-8));
        }
        out
    }
}

fn summary(config: &ExperimentConfig, invariants: Vec<Check>, properties: Vec<Check>, results: Value) -> Summary {
    Summary { kind: config.kind, config: config.clone(), invariants, properties, results, files: Vec::new() }
}

fn observables_or(config: &ExperimentConfig, fallback: Vec<Observable>) -> Vec<Observable> {
    if config.observables.is_empty() {
        fallback
    } else {
        config.observables.clone()
    }
}

fn end_to_end(n: usize) -> Vec<Observable> {
    vec![Observable::Correlation { i: 1, j: n }, Observable::Concurrence { i: 1, j: n }]
}

pub(super) fn evolve(config: &ExperimentConfig) -> Result<RunOutput> {
    let spec = &config.lattice;
    let Setup { sector, rho0 } = setup(config, spec, config.n_particles)?;
    let observables = observables_or(config, end_to_end(spec.n_sites));
    let probes = probes(&observables, &sector.basis)?;
    let mut monitor = Monitor::new(spec, &sector.basis)?;
    let mut table = Table::new("trajectory", std::iter::once("t".to_string()).chain(headers(&observables)).collect());
    let times = config.time_grid.as_ref().expect("validated").times();
    let method = evolution_method(&config.solver, sector.dim());
    let last = evolve_with(&rho0, &sector.liouvillian, &times, method, |t, rho| {
        let full = sector.full(rho);
        monitor.observe(&full);
        let mut row = vec![t];
        row.extend(measure(&probes, &sector.basis, &full, || sector.residual(rho))?);
        table.rows.push(row);
        Ok(())
    })?;
    let t_last = *times.last().expect("validated");
    let snapshot = DensitySnapshot::new(&sector.full(&last), Some(t_last));
    let results = json!({ "samples": times.len(), "final_time": t_last, "sector_dimension": sector.dim() });
    Ok(RunOutput {
        summary: summary(config, monitor.checks(), Vec::new(), results),
        tables: vec![table],
        snapshots: vec![("density_final".into(), snapshot)],
    })
}

fn solve_steady(sector: &Sector, rho0: &DensityMatrix, spec: &LatticeSpec, solver: &SolverSpec) -> Result<SteadyState> {
    steady_state_by_integration(rho0, &sector.liouvillian, spec.dephasing_gamma, steady_options(solver, sector.dim()))
}

fn state_checks(rho: &DensityMatrix) -> Vec<Check> {
    vec![
        Check::at_most("trace_error", (rho.trace() - C64::new(1.0, 0.0)).norm(), 1e-9),
        Check::at_most("hermiticity_error", rho.hermiticity_error(), 1e-10),
        Check::at_least("min_eigenvalue", rho.min_eigenvalue(), -1e-8),
    ]
}

pub(super) fn steady(config: &ExperimentConfig) -> Result<RunOutput> {
    let spec = &config.lattice;
    let Setup { sector, rho0 } = setup(config, spec, config.n_particles)?;
    let ss = solve_steady(&sector, &rho0, spec, &config.solver)?;
    let full = sector.full(&ss.rho);
    let observables = observables_or(config, end_to_end(spec.n_sites));
    let probes = probes(&observables, &sector.basis)?;
    let cols = headers(&observables);
    let values = measure(&probes, &sector.basis, &full, || ss.residual)?;
    let mut table = Table::new("steady", std::iter::once("t".to_string()).chain(cols.iter().cloned()).collect());
    table.rows.push(std::iter::once(ss.time).chain(values.iter().copied()).collect());

    let diagonal: Vec<Value> =
        (0..sector.basis.len()).map(|k| json!({ "state": sector.basis.bitstring(k), "population": full.get(k, k).re })).collect();
    let named: Map<String, Value> = cols.iter().cloned().zip(values.iter().map(|&v| json!(v))).collect();
    let mut invariants = state_checks(&full);
    invariants.push(Check::at_most("liouvillian_residual", ss.residual, config.solver.steady_tolerance));
    let results = json!({
        "time": ss.time,
        "residual": ss.residual,
        "purity": full.purity(),
        "diagonal": diagonal,
        "observables": named,
        "sector_dimension": sector.dim(),
    });
    Ok(RunOutput {
        summary: summary(config, invariants, Vec::new(), results),
        tables: vec![table],
        snapshots: vec![("steady_density".into(), DensitySnapshot::new(&full, Some(ss.time)))],
    })
}

pub(super) fn correlation_map(config: &ExperimentConfig) -> Result<RunOutput> {
    let spec = &config.lattice;
    let Setup { sector, rho0 } = setup(config, spec, config.n_particles)?;
    let ss = solve_steady(&sector, &rho0, spec, &config.solver)?;
    let full = sector.full(&ss.rho);
    let c = CorrelationMatrix::from_density(&full, &sector.basis)?;
    let mut table = Table::new("correlation_map", ["i", "j", "re", "im"].map(String::from).to_vec());
    for (j, k, z) in c.grid() {
        table.rows.push(vec![(j + 1) as f64, (k + 1) as f64, z.re, z.im]);
    }
    let mut invariants = state_checks(&full);
    invariants.push(Check::at_most("liouvillian_residual", ss.residual, config.solver.steady_tolerance));
    invariants.push(Check::at_most("correlation_trace_error", (c.trace() - config.n_particles as f64).abs(), 1e-8));
    let results = json!({ "time": ss.time, "residual": ss.residual, "trace": c.trace() });
    Ok(RunOutput { summary: summary(config, invariants, Vec::new(), results), tables: vec![table], snapshots: Vec::new() })
}

struct ScanPoint {
    n_sites: usize,
    n_particles: usize,
    pairs: Vec<f64>,
    checks: Vec<Check>,
    time: f64,
}

fn scan_point(config: &ExperimentConfig, n_sites: usize, n_particles: usize) -> Result<ScanPoint> {
    let spec = LatticeSpec { n_sites, trap_center: None, ..config.lattice.clone() };
    let Setup { sector, rho0 } = setup(config, &spec, n_particles)?;
    let ss = solve_steady(&sector, &rho0, &spec, &config.solver)?;
    let full = sector.full(&ss.rho);
    let pairs = (0..n_sites / 2)
        .map(|i| Ok(concurrence(&reduce_to_pair(&full, &sector.basis, i, n_sites - 1 - i)?)))
        .collect::<Result<Vec<f64>>>()?;
    Ok(ScanPoint { n_sites, n_particles, pairs, checks: state_checks(&full), time: ss.time })
}

/// Runs independent jobs on scoped threads; results keep input order.
fn parallel<T: Send, R: Send>(jobs: Vec<T>, f: impl Fn(T) -> Result<R> + Sync) -> Result<Vec<R>> {
    std::thread::scope(|s| {
        let f = &f;
        let handles: Vec<_> = jobs.into_iter().map(|job| s.spawn(move || f(job))).collect();
        handles.into_iter().map(|h| h.join().expect("scan job panicked")).collect()
    })
}

pub(super) fn concurrence_scan(config: &ExperimentConfig) -> Result<RunOutput> {
    let sizes = config.sizes.as_ref().expect("validated");
    let mut jobs = Vec::new();
    let mut skipped = Vec::new();
    for &n in &sizes.sizes {
        for &np in &sizes.fillings {
            if np <= n.div_ceil(2) {
                jobs.push((n, np));
            } else {
                skipped.push(json!({ "n_sites": n, "n_particles": np }));
            }
        }
    }
    let points = parallel(jobs, |(n, np)| scan_point(config, n, np))?;

    let mut table = Table::new("concurrence_scan", ["N", "n_particles", "i", "concurrence"].map(String::from).to_vec());
    let mut invariants = Vec::new();
    let mut per_point = Vec::new();
    let mut worst_formula: f64 = 0.0;
    let mut worst_pair_spread: f64 = 0.0;
    for p in &points {
        for (k, &c) in p.pairs.iter().enumerate() {
            table.rows.push(vec![p.n_sites as f64, p.n_particles as f64, (k + 1) as f64, c]);
        }
        let formula = 2.0 * p.n_particles as f64 / (p.n_sites as f64 + 1.0);
        let dev = p.pairs.iter().map(|c| (c - formula).abs()).fold(0.0, f64::max);
        let spread = p.pairs.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b)) - p.pairs.iter().fold(f64::INFINITY, |a, &b| a.min(b));
        worst_formula = worst_formula.max(dev);
        worst_pair_spread = worst_pair_spread.max(spread);
        for c in &p.checks {
            invariants.push(Check { name: format!("N{}_n{}_{}", p.n_sites, p.n_particles, c.name), ..c.clone() });
        }
        per_point.push(json!({
            "n_sites": p.n_sites,
            "n_particles": p.n_particles,
            "concurrence": p.pairs,
            "two_n_over_n_plus_one": formula,
            "max_deviation": dev,
            "steady_time": p.time,
        }));
    }
    // Smallest step in concurrence when one particle is added at fixed size.
    let mut min_step = f64::INFINITY;
    for a in &points {
        for b in &points {
            if a.n_sites == b.n_sites && b.n_particles == a.n_particles + 1 {
                for (ca, cb) in a.pairs.iter().zip(&b.pairs) {
                    min_step = min_step.min(cb - ca);
                }
            }
        }
    }
    let mut properties = vec![
        Check::at_most("max_deviation_from_2n_over_n_plus_one", worst_formula, 1e-7),
        Check::at_most("symmetric_pair_spread", worst_pair_spread, 1e-7),
    ];
    if min_step.is_finite() {
        properties.push(Check::at_least("min_increase_with_filling", min_step, 0.0));
    }
    let results = json!({ "points": per_point, "skipped": skipped });
    Ok(RunOutput { summary: summary(config, invariants, properties, results), tables: vec![table], snapshots: Vec::new() })
}

/// `|⟨f_1^† f_N⟩|` on a full-sector state.
fn end_to_end_modulus(op: &OperatorMatrix, rho: &DensityMatrix) -> f64 {
    rho.expectation(op).norm()
}

fn first_local_max_after(times: &[f64], values: &[f64], start: f64) -> Option<usize> {
    (1..values.len().saturating_sub(1)).find(|&k| times[k] >= start && values[k] > values[k - 1] && values[k] >= values[k + 1])
}

pub(super) fn fock_quench(config: &ExperimentConfig) -> Result<RunOutput> {
    let spec = &config.lattice;
    let q = config.quench.as_ref().expect("validated");
    let n = spec.n_sites;
    let basis = ManyBodyBasis::new(n, config.n_particles)?;
    let psi = initial_vector(&config.initial_state, spec, &basis)?;
    let free = Sector::new(spec, basis.clone(), None)?;
    let trapped_spec = LatticeSpec { trap_amplitude: q.trap_amplitude, trap_center: q.trap_center, ..spec.clone() };
    let trapped = Sector::new(&trapped_spec, basis.clone(), None)?;
    let rho0 = DensityMatrix::from_pure(&psi);
    let e2e = bilinear_operator(&basis, 0, n - 1)?;
    let method = evolution_method(&config.solver, basis.len());
    let grid = config.time_grid.as_ref().expect("validated").times();
    let t_end = *grid.last().expect("validated");

    let (tau, mode) = match q.time {
        QuenchTime::At(t) => (t, "fixed"),
        QuenchTime::Keyword(_) => {
            let fine: Vec<f64> = (0..=((t_end / 0.05).round() as usize)).map(|k| k as f64 * 0.05).collect();
            let mut series = Vec::with_capacity(fine.len());
            evolve_with(&rho0, &free.liouvillian, &fine, method, |_, rho| {
                series.push(end_to_end_modulus(&e2e, rho));
                Ok(())
            })?;
            let k = first_local_max_after(&fine, &series, q.transient)
                .ok_or_else(|| Error::Config(format!("quench.time: no local maximum of |<f_1^+ f_N>| after t = {}", q.transient)))?;
            (fine[k], "auto")
        }
    };
    if !(tau < t_end) {
        return Err(Error::Config(format!("quench.time: {tau} is not inside the time grid (t_end = {t_end})")));
    }

    let mut times: Vec<f64> = grid.iter().copied().filter(|&t| (t - tau).abs() > 1e-12).collect();
    times.push(tau);
    times.sort_by(f64::total_cmp);

    let observables = observables_or(config, end_to_end(n));
    let probes = probes(&observables, &basis)?;
    let mut monitor = Monitor::new(spec, &basis)?;
    let mut post_monitor = Monitor::new(&trapped_spec, &basis)?;

    // Unquenched reference over the whole grid; its state at tau seeds the
    // trapped segment.
    let mut free_abs = Vec::with_capacity(times.len());
    let mut free_residual = Vec::with_capacity(times.len());
    let mut pre_rows = Vec::new();
    let mut at_quench = None;
    evolve_with(&rho0, &free.liouvillian, &times, method, |t, rho| {
        free_abs.push(end_to_end_modulus(&e2e, rho));
        free_residual.push(free.residual(rho));
        if t <= tau {
            monitor.observe(rho);
            let mut row = vec![t, 0.0];
            row.extend(measure(&probes, &basis, rho, || free.residual(rho))?);
            pre_rows.push(row);
        }
        if t == tau {
            at_quench = Some(rho.clone());
        }
        Ok(())
    })?;
    let rho_q = at_quench.expect("tau is a sample time");

    let post_times: Vec<f64> = times.iter().copied().filter(|&t| t > tau).collect();
    let shifted: Vec<f64> = post_times.iter().map(|t| t - tau).collect();
    let mut post_rows = Vec::new();
    let mut post_abs = Vec::new();
    post_monitor.observe(&rho_q);
    evolve_with(&rho_q, &trapped.liouvillian, &shifted, method, |s, rho| {
        post_monitor.observe(rho);
        post_abs.push(end_to_end_modulus(&e2e, rho));
        let mut row = vec![s + tau, 1.0];
        row.extend(measure(&probes, &basis, rho, || trapped.residual(rho))?);
        post_rows.push(row);
        Ok(())
    })?;

    let mut cols = vec!["t".to_string(), "quenched".to_string()];
    cols.extend(headers(&observables));
    cols.push(format!("abs_c_1_{n}_free"));
    cols.push("residual_free".into());
    let mut table = Table::new("fock_quench", cols);
    for (k, mut row) in pre_rows.into_iter().chain(post_rows).enumerate() {
        row.push(free_abs[k]);
        row.push(free_residual[k]);
        table.rows.push(row);
    }

    // Last local maximum of the pre-quench series (walking back from tau).
    let pre_abs: Vec<f64> = times.iter().zip(&free_abs).filter(|(t, _)| **t <= tau).map(|(_, v)| *v).collect();
    let mut k = pre_abs.len() - 1;
    while k > 0 && pre_abs[k - 1] >= pre_abs[k] {
        k -= 1;
    }
    let peak = pre_abs[k];
    let window: Vec<f64> = std::iter::once(end_to_end_modulus(&e2e, &rho_q))
        .chain(post_times.iter().zip(&post_abs).filter(|(t, _)| **t <= tau + q.window + 1e-12).map(|(_, v)| *v))
        .collect();
    let window_mean = window.iter().sum::<f64>() / window.len() as f64;
    let min_free_residual = times
        .iter()
        .zip(&free_residual)
        .filter(|(t, _)| **t >= q.transient)
        .map(|(_, r)| *r)
        .fold(f64::INFINITY, f64::min);

    let mut invariants = monitor.checks();
    invariants.extend(post_monitor.checks().into_iter().map(|c| Check { name: format!("post_quench_{}", c.name), ..c }));
    let properties = vec![
        Check::at_least("post_quench_mean_over_peak", window_mean / peak, 0.8),
        Check::at_least("min_free_residual_after_transient", min_free_residual, 1e-4),
    ];
    let results = json!({
        "quench_time": tau,
        "quench_time_mode": mode,
        "pre_quench_peak": peak,
        "pre_quench_peak_time": times[k],
        "post_quench_window_mean": window_mean,
        "window": [tau, (tau + q.window).min(t_end)],
        "min_free_residual_after_transient": min_free_residual,
    });
    Ok(RunOutput { summary: summary(config, invariants, properties, results), tables: vec![table], snapshots: Vec::new() })
}

/// Least-squares line `y = a x + b` and its coefficient of determination.
pub(crate) fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let ss_tot: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let ss_res: f64 = x.iter().zip(y).map(|(a, b)| (b - slope * a - intercept).powi(2)).sum();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    (slope, intercept, r2)
}

pub(super) fn robustness(config: &ExperimentConfig) -> Result<RunOutput> {
    let scan = config.scan.as_ref().expect("validated");
    let aa = config.kind == super::ExperimentKind::RobustnessAa;
    let n = config.lattice.n_sites;
    let amplitudes = scan.amplitudes();
    let rows = parallel(amplitudes.clone(), |v| {
        let spec = if aa { config.lattice.clone().with_aa(v) } else { config.lattice.clone().with_interaction(v) };
        let basis = ManyBodyBasis::new(n, config.n_particles)?;
        let rho0 = DensityMatrix::from_pure(&initial_vector(&config.initial_state, &spec, &basis)?);
        let sector = Sector::new(&spec, basis, None)?;
        let e2e = bilinear_operator(&sector.basis, 0, n - 1)?;
        let mut monitor = Monitor::new(&spec, &sector.basis)?;
        let mut out = Vec::new();
        evolve_with(&rho0, &sector.liouvillian, &scan.times, evolution_method(&config.solver, sector.dim()), |t, rho| {
            monitor.observe(rho);
            let c = concurrence(&reduce_to_pair(rho, &sector.basis, 0, n - 1)?);
            out.push(vec![v, t, c, end_to_end_modulus(&e2e, rho)]);
            Ok(())
        })?;
        Ok((out, monitor.checks()))
    })?;

    let label = if aa { "v_aa" } else { "v_int" };
    let mut table = Table::new(if aa { "robustness_aa" } else { "robustness_int" }, vec![label.into(), "t".into(), "concurrence".into(), format!("abs_c_1_{n}")]);
    let mut invariants = Vec::new();
    for ((r, checks), v) in rows.into_iter().zip(&amplitudes) {
        table.rows.extend(r);
        invariants.extend(checks.into_iter().map(|c| Check { name: format!("{label}={v}_{}", c.name), ..c }));
    }
    let mut fits = Vec::new();
    let mut properties = Vec::new();
    for &t in &scan.times {
        let (xs, ys): (Vec<f64>, Vec<f64>) = table.rows.iter().filter(|r| r[1] == t).map(|r| (r[0], r[2])).unzip();
        let (slope, intercept, r2) = linear_fit(&xs, &ys);
        // Leading points before the concurrence first clips to zero.
        let k = ys.iter().position(|&c| c <= 0.0).unwrap_or(ys.len());
        let (p_slope, p_intercept, p_r2) = linear_fit(&xs[..k], &ys[..k]);
        fits.push(json!({
            "t": t,
            "concurrence": ys,
            "slope": slope,
            "intercept": intercept,
            "r_squared": r2,
            "positive_points": k,
            "positive_slope": p_slope,
            "positive_intercept": p_intercept,
            "positive_r_squared": p_r2,
        }));
        if !aa && k > 2 {
            properties.push(Check::at_least(&format!("positive_range_r_squared_t{t}"), p_r2, 0.95));
        }
        if aa {
            if let Some(c) = xs.iter().zip(&ys).find(|(x, _)| **x > 0.0).map(|(_, c)| *c) {
                properties.push(Check::at_least(&format!("smallest_amplitude_concurrence_t{t}"), c, 0.05));
            }
        }
    }
    let results = json!({ "amplitudes": amplitudes, "fits": fits });
    Ok(RunOutput { summary: summary(config, invariants, properties, results), tables: vec![table], snapshots: Vec::new() })
}
