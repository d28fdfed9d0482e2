//! Python bindings: lattice setup, density matrices, Lindblad evolution,
//! pair entanglement, closed-form oracles and the experiment runner.
//!
//! Sites are 0-based here, as in the Rust API. Matrices cross the boundary
//! as nested lists of Python `complex`.

use std::path::PathBuf;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;

use dephasing::entangle::{self, TwoSiteRDM};
use dephasing::experiment::{self, ExperimentConfig, ExperimentKind};
use dephasing::fastpath::{CorrelationDynamics, CorrelationMatrix};
use dephasing::fock::{self, ManyBodyBasis};
use dephasing::lindblad::{self, EvolutionMethod, Liouvillian, SteadyStateOptions};
use dephasing::model::{self, LatticeSpec};
use dephasing::oracle;

create_exception!(pydephasing, DephasingError, PyException);

fn py_err(e: dephasing::Error) -> PyErr {
    DephasingError::new_err(e.to_string())
}

fn to_rows(m: &DMatrix<C64>) -> Vec<Vec<C64>> {
    (0..m.nrows()).map(|r| (0..m.ncols()).map(|c| m[(r, c)]).collect()).collect()
}

fn from_rows(rows: &[Vec<C64>]) -> PyResult<DMatrix<C64>> {
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(DephasingError::new_err("matrix must be square"));
    }
    Ok(DMatrix::from_fn(n, n, |r, c| rows[r][c]))
}

/// Chain parameters: hopping, central dephasing rate and optional
/// quasi-periodic potential, harmonic trap and nearest-neighbour interaction.
#[pyclass(name = "Lattice", from_py_object)]
#[derive(Clone)]
struct PyLattice {
    spec: LatticeSpec,
}

#[pymethods]
impl PyLattice {
    #[new]
    #[pyo3(signature = (n_sites, tunneling=1.0, gamma=1.0, aa_amplitude=0.0, trap_amplitude=0.0, interaction=0.0))]
    fn new(n_sites: usize, tunneling: f64, gamma: f64, aa_amplitude: f64, trap_amplitude: f64, interaction: f64) -> PyResult<Self> {
        let spec = LatticeSpec { tunneling, dephasing_gamma: gamma, aa_amplitude, trap_amplitude, interaction, ..LatticeSpec::new(n_sites) };
        spec.validate().map_err(py_err)?;
        Ok(Self { spec })
    }

    #[getter]
    fn n_sites(&self) -> usize {
        self.spec.n_sites
    }

    #[getter]
    fn gamma(&self) -> f64 {
        self.spec.dephasing_gamma
    }

    /// Zero-based index of the dephased site.
    #[getter]
    fn central_site(&self) -> usize {
        self.spec.central_site()
    }

    fn single_particle_hamiltonian(&self) -> PyResult<Vec<Vec<f64>>> {
        let h = model::build_single_particle_hamiltonian(&self.spec, true).map_err(py_err)?;
        Ok((0..h.nrows()).map(|r| h.row(r).iter().copied().collect()).collect())
    }

    /// Ascending single-particle energies.
    fn energies(&self) -> PyResult<Vec<f64>> {
        let h = model::build_single_particle_hamiltonian(&self.spec, true).map_err(py_err)?;
        Ok(model::eigenmodes(&h).energies)
    }

    fn __repr__(&self) -> String {
        format!("Lattice(n_sites={}, gamma={})", self.spec.n_sites, self.spec.dephasing_gamma)
    }
}

#[pyclass(name = "DensityMatrix", from_py_object)]
#[derive(Clone)]
struct PyDensityMatrix {
    inner: lindblad::DensityMatrix,
}

#[pymethods]
impl PyDensityMatrix {
    /// Validates Hermiticity, unit trace and positivity.
    #[new]
    fn new(rows: Vec<Vec<C64>>) -> PyResult<Self> {
        Ok(Self { inner: lindblad::DensityMatrix::new(from_rows(&rows)?).map_err(py_err)? })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn matrix(&self) -> Vec<Vec<C64>> {
        to_rows(self.inner.matrix())
    }

    fn trace(&self) -> C64 {
        self.inner.trace()
    }

    fn purity(&self) -> f64 {
        self.inner.purity()
    }

    fn min_eigenvalue(&self) -> f64 {
        self.inner.min_eigenvalue()
    }

    fn __getitem__(&self, idx: (usize, usize)) -> PyResult<C64> {
        let d = self.inner.dim();
        if idx.0 >= d || idx.1 >= d {
            return Err(pyo3::exceptions::PyIndexError::new_err(format!("index {idx:?} out of range for dimension {d}")));
        }
        Ok(self.inner.get(idx.0, idx.1))
    }
}

/// Reduced state of two sites in the basis `|00⟩, |01⟩, |10⟩, |11⟩`.
#[pyclass(name = "PairState", from_py_object)]
#[derive(Clone)]
struct PyPairState {
    inner: TwoSiteRDM,
}

#[pymethods]
impl PyPairState {
    #[new]
    #[pyo3(signature = (rows, sites=(0, 1)))]
    fn new(rows: Vec<Vec<C64>>, sites: (usize, usize)) -> PyResult<Self> {
        Ok(Self { inner: TwoSiteRDM::new(sites, from_rows(&rows)?).map_err(py_err)? })
    }

    #[getter]
    fn sites(&self) -> (usize, usize) {
        self.inner.sites()
    }

    fn matrix(&self) -> Vec<Vec<C64>> {
        to_rows(self.inner.matrix())
    }

    fn concurrence(&self) -> f64 {
        entangle::concurrence(&self.inner)
    }

    fn negativity(&self) -> f64 {
        entangle::negativity(&self.inner)
    }

    /// Ascending eigenvalues of the partial transpose.
    fn partial_transpose_eigenvalues(&self) -> [f64; 4] {
        entangle::partial_transpose_eigenvalues(&self.inner)
    }
}

/// Fixed-particle-number sector of a lattice with its Liouvillian.
#[pyclass(name = "Chain")]
struct PyChain {
    spec: LatticeSpec,
    basis: ManyBodyBasis,
    liouvillian: Liouvillian,
}

fn method_from(name: &str, dim: usize) -> PyResult<EvolutionMethod> {
    match name {
        "auto" if dim <= 12 => Ok(EvolutionMethod::ExactExponential),
        "auto" | "adaptive" => Ok(EvolutionMethod::default()),
        "exact" => Ok(EvolutionMethod::ExactExponential),
        other => Err(DephasingError::new_err(format!("unknown method {other:?}; use auto, adaptive or exact"))),
    }
}

impl PyChain {
    fn wrap(rho: lindblad::DensityMatrix) -> PyDensityMatrix {
        PyDensityMatrix { inner: rho }
    }

    fn check_dim(&self, rho: &PyDensityMatrix) -> PyResult<()> {
        if rho.inner.dim() != self.basis.len() {
            return Err(py_err(dephasing::Error::DimensionMismatch { expected: self.basis.len(), got: rho.inner.dim() }));
        }
        Ok(())
    }
}

#[pymethods]
impl PyChain {
    #[new]
    #[pyo3(signature = (lattice, n_particles=1))]
    fn new(lattice: &PyLattice, n_particles: usize) -> PyResult<Self> {
        let spec = lattice.spec.clone();
        let basis = ManyBodyBasis::new(spec.n_sites, n_particles).map_err(py_err)?;
        let h = fock::build_many_body_hamiltonian(&spec, &basis, true).map_err(py_err)?;
        let l = fock::number_operator(&basis, spec.central_site()).map_err(py_err)?;
        let liouvillian = lindblad::build_liouvillian(&h, spec.dephasing_gamma, &l).map_err(py_err)?;
        Ok(Self { spec, basis, liouvillian })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.basis.len()
    }

    /// Basis states as occupation strings, site 0 first.
    fn bitstrings(&self) -> Vec<String> {
        (0..self.basis.len()).map(|k| self.basis.bitstring(k)).collect()
    }

    fn fock(&self, bitstring: &str) -> PyResult<PyDensityMatrix> {
        let psi = fock::fock_state(&self.basis, bitstring).map_err(py_err)?;
        Ok(Self::wrap(lindblad::DensityMatrix::from_pure(&psi)))
    }

    /// Slater determinant of the listed modes (ascending energy, 0-based).
    fn slater(&self, modes: Vec<usize>) -> PyResult<PyDensityMatrix> {
        let h = model::build_single_particle_hamiltonian(&self.spec, true).map_err(py_err)?;
        let psi = fock::slater_state(&self.basis, &model::eigenmodes(&h), &modes).map_err(py_err)?;
        Ok(Self::wrap(lindblad::DensityMatrix::from_pure(&psi)))
    }

    /// Indices of the reflection-even and reflection-odd modes.
    fn parity_modes(&self) -> PyResult<(Vec<usize>, Vec<usize>)> {
        let h = model::build_single_particle_hamiltonian(&self.spec, true).map_err(py_err)?;
        let classes = model::classify_mode_parity(&h, &model::reflection_matrix(self.spec.n_sites)).map_err(py_err)?;
        Ok((classes.even, classes.odd))
    }

    /// `‖𝓛 vec ρ‖∞`.
    fn residual(&self, rho: &PyDensityMatrix) -> PyResult<f64> {
        self.check_dim(rho)?;
        Ok(self.liouvillian.residual(rho.inner.matrix()))
    }

    /// States at each of the strictly increasing `times`.
    #[pyo3(signature = (rho, times, method="auto"))]
    fn evolve(&self, py: Python<'_>, rho: &PyDensityMatrix, times: Vec<f64>, method: &str) -> PyResult<Vec<PyDensityMatrix>> {
        self.check_dim(rho)?;
        let m = method_from(method, self.basis.len())?;
        let traj = py.detach(|| lindblad::evolve(&rho.inner, &self.liouvillian, &times, m)).map_err(py_err)?;
        Ok(traj.states.into_iter().map(Self::wrap).collect())
    }

    /// Integrates until the residual is below `tol`; returns `(rho, time, residual)`.
    #[pyo3(signature = (rho, tol=1e-10, method="auto", t_max=None))]
    fn steady_state(&self, py: Python<'_>, rho: &PyDensityMatrix, tol: f64, method: &str, t_max: Option<f64>) -> PyResult<(PyDensityMatrix, f64, f64)> {
        self.check_dim(rho)?;
        let opts = SteadyStateOptions { convergence_tol: tol, t_max, method: method_from(method, self.basis.len())?, ..Default::default() };
        let gamma = self.spec.dephasing_gamma;
        let ss = py.detach(|| lindblad::steady_state_by_integration(&rho.inner, &self.liouvillian, gamma, opts)).map_err(py_err)?;
        Ok((Self::wrap(ss.rho), ss.time, ss.residual))
    }

    /// `C_jk = ⟨f_j^† f_k⟩`.
    fn correlation_matrix(&self, rho: &PyDensityMatrix) -> PyResult<Vec<Vec<C64>>> {
        self.check_dim(rho)?;
        Ok(to_rows(CorrelationMatrix::from_density(&rho.inner, &self.basis).map_err(py_err)?.matrix()))
    }

    fn pair_state(&self, rho: &PyDensityMatrix, i: usize, j: usize) -> PyResult<PyPairState> {
        self.check_dim(rho)?;
        Ok(PyPairState { inner: entangle::reduce_to_pair(&rho.inner, &self.basis, i, j).map_err(py_err)? })
    }

    /// `Tr[ρ Ĉ]` for the hidden charge `-1/2 + Σ_i f_i^† f_{N-1-i}`.
    fn charge(&self, rho: &PyDensityMatrix) -> PyResult<f64> {
        self.check_dim(rho)?;
        Ok(rho.inner.expectation(&fock::charge_operator(&self.basis)).re)
    }
}

/// Two-point functions from the closed linear equation for `C`.
#[pyfunction]
fn correlation_evolve(lattice: &PyLattice, c0: Vec<Vec<C64>>, times: Vec<f64>) -> PyResult<Vec<Vec<Vec<C64>>>> {
    let dynamics = CorrelationDynamics::from_spec(&lattice.spec, true).map_err(py_err)?;
    let c0 = CorrelationMatrix::new(from_rows(&c0)?).map_err(py_err)?;
    let out = dynamics.evolve(&c0, &times, Default::default()).map_err(py_err)?;
    Ok(out.iter().map(|c| to_rows(c.matrix())).collect())
}

#[pyfunction]
fn analytic_steady_state(n_sites: usize) -> PyResult<PyDensityMatrix> {
    Ok(PyDensityMatrix { inner: oracle::analytic_steady_state(n_sites).map_err(py_err)? })
}

#[pyfunction]
fn analytic_pair_state(n_sites: usize) -> PyResult<PyPairState> {
    Ok(PyPairState { inner: oracle::analytic_pair_rdm(n_sites).map_err(py_err)? })
}

#[pyfunction]
fn ppt_eigenvalue_formula(n_sites: usize) -> PyResult<[f64; 4]> {
    oracle::ppt_eigenvalue_formula(n_sites).map_err(py_err)
}

/// Three-site single-particle state at `t` from the central site, 3x3 rows.
#[pyfunction]
fn analytic_three_site(t: f64, gamma: f64) -> Vec<Vec<C64>> {
    to_rows(&oracle::AnalyticN3Trajectory::new(gamma).matrix(t))
}

#[pyfunction]
fn steady_pair_concurrence(n_sites: usize, n_particles: usize) -> f64 {
    oracle::steady_pair_concurrence(n_sites, n_particles)
}

/// Runs one experiment kind with an optional JSON config string and
/// `key=value` overrides. Writes files when `out` is given. Returns the
/// summary as a JSON string.
#[pyfunction]
#[pyo3(signature = (kind, config=None, overrides=Vec::new(), out=None))]
fn run_experiment(py: Python<'_>, kind: &str, config: Option<&str>, overrides: Vec<String>, out: Option<PathBuf>) -> PyResult<String> {
    let kind = ExperimentKind::ALL
        .into_iter()
        .find(|k| k.name() == kind)
        .ok_or_else(|| DephasingError::new_err(format!("unknown experiment kind {kind:?}")))?;
    let file = config.map(serde_json::from_str).transpose().map_err(|e| DephasingError::new_err(e.to_string()))?;
    let cfg = ExperimentConfig::assemble(kind, file, &overrides).map_err(py_err)?;
    let output = py.detach(|| experiment::run(&cfg)).map_err(py_err)?;
    if let Some(dir) = out {
        experiment::emit_plot_data(&output, &dir).map_err(py_err)?;
    }
    serde_json::to_string(&output.summary).map_err(|e| DephasingError::new_err(e.to_string()))
}

#[pymodule]
fn pydephasing(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("DephasingError", m.py().get_type::<DephasingError>())?;
    m.add_class::<PyLattice>()?;
    m.add_class::<PyDensityMatrix>()?;
    m.add_class::<PyPairState>()?;
    m.add_class::<PyChain>()?;
    m.add_function(wrap_pyfunction!(correlation_evolve, m)?)?;
    m.add_function(wrap_pyfunction!(analytic_steady_state, m)?)?;
    m.add_function(wrap_pyfunction!(analytic_pair_state, m)?)?;
    m.add_function(wrap_pyfunction!(ppt_eigenvalue_formula, m)?)?;
    m.add_function(wrap_pyfunction!(analytic_three_site, m)?)?;
    m.add_function(wrap_pyfunction!(steady_pair_concurrence, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
