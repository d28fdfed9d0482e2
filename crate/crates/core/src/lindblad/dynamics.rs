use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

use super::integrate::{AdaptiveTolerances, Dopri5};
use super::{DensityMatrix, Liouvillian, StateTolerances};
use crate::error::{Error, Result};
use crate::fock::OperatorMatrix;
use crate::linalg::{max_abs, unvectorize, vectorize, C64, I, ONE};

/// Largest superoperator size (`d²`) handled by dense exponentials and the
/// dense kernel solver.
pub const DENSE_LIMIT: usize = 1600;

#[derive(Debug, Clone, Copy)]
pub enum EvolutionMethod {
    Adaptive(AdaptiveTolerances),
    /// Dense `exp(𝓛 Δt)` between samples.
    ExactExponential,
}

impl Default for EvolutionMethod {
    fn default() -> Self {
        EvolutionMethod::Adaptive(AdaptiveTolerances::default())
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DensityMatrix>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> Option<&DensityMatrix> {
        self.states.last()
    }
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.first().is_some_and(|&t| !(t >= 0.0)) {
        return Err(Error::Config("sample times must be non-negative".into()));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Config("sample times must be strictly increasing".into()));
    }
    Ok(())
}

fn check_invariants(t: f64, rho: &DMatrix<C64>) -> Result<()> {
    let tol = StateTolerances::default();
    let tr = (rho.trace() - ONE).norm();
    if tr > 10.0 * tol.trace {
        return Err(Error::InvariantViolation { t, what: "trace error", value: tr });
    }
    let herm = max_abs(&(rho - rho.adjoint()));
    if herm > 10.0 * tol.hermiticity {
        return Err(Error::InvariantViolation { t, what: "hermiticity error", value: herm });
    }
    Ok(())
}

/// Evolves `rho0` from `t = 0` and hands each sample to `observer`. Returns
/// the state at the last sample (or `rho0` when `times` is empty).
pub fn evolve_with(
    rho0: &DensityMatrix,
    liouvillian: &Liouvillian,
    times: &[f64],
    method: EvolutionMethod,
    mut observer: impl FnMut(f64, &DensityMatrix) -> Result<()>,
) -> Result<DensityMatrix> {
    let d = liouvillian.dim();
    if rho0.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, got: rho0.dim() });
    }
    check_times(times)?;
    let mut current = rho0.clone();
    match method {
        EvolutionMethod::Adaptive(tol) => {
            let rhs = |x: &[C64], out: &mut [C64]| liouvillian.apply_into(x, out);
            let mut solver = Dopri5::new(rhs, 0.0, vectorize(rho0.matrix()).as_slice().to_vec(), tol);
            for &t in times {
                solver.advance_to(t)?;
                let m = DMatrix::from_column_slice(d, d, solver.y());
                check_invariants(t, &m)?;
                current = DensityMatrix::new_unchecked(m);
                observer(t, &current)?;
            }
        }
        EvolutionMethod::ExactExponential => {
            let generator = dense_generator(liouvillian)?;
            let mut cache: HashMap<u64, DMatrix<C64>> = HashMap::new();
            let mut v = vectorize(rho0.matrix());
            let mut t_prev = 0.0;
            for &t in times {
                let dt = t - t_prev;
                if dt > 0.0 {
                    let prop = cache.entry(dt.to_bits()).or_insert_with(|| (&generator * C64::new(dt, 0.0)).exp());
                    v = &*prop * v;
                }
                t_prev = t;
                let m = unvectorize(&v, d);
                check_invariants(t, &m)?;
                current = DensityMatrix::new_unchecked(m);
                observer(t, &current)?;
            }
        }
    }
    Ok(current)
}

fn dense_generator(liouvillian: &Liouvillian) -> Result<DMatrix<C64>> {
    let n = liouvillian.dim().pow(2);
    if n > DENSE_LIMIT {
        return Err(Error::Solver(format!("superoperator dimension {n} exceeds dense limit {DENSE_LIMIT}")));
    }
    Ok(liouvillian.to_dense())
}

/// `ρ(t) = exp(𝓛t) ρ₀` at each requested time.
pub fn evolve(rho0: &DensityMatrix, liouvillian: &Liouvillian, times: &[f64], method: EvolutionMethod) -> Result<Trajectory> {
    let mut traj = Trajectory { times: Vec::with_capacity(times.len()), states: Vec::with_capacity(times.len()) };
    evolve_with(rho0, liouvillian, times, method, |t, rho| {
        traj.times.push(t);
        traj.states.push(rho.clone());
        Ok(())
    })?;
    Ok(traj)
}

#[derive(Debug, Clone, Copy)]
pub struct SteadyStateOptions {
    /// Stop once `‖𝓛 vec(ρ)‖∞` falls below this.
    pub convergence_tol: f64,
    /// Defaults to `10⁴/γ`.
    pub t_max: Option<f64>,
    /// Simulated time between residual checks (doubles each check for the
    /// exact-exponential method).
    pub check_interval: f64,
    pub method: EvolutionMethod,
}

impl Default for SteadyStateOptions {
    fn default() -> Self {
        Self { convergence_tol: 1e-9, t_max: None, check_interval: 1.0, method: EvolutionMethod::default() }
    }
}

impl SteadyStateOptions {
    pub fn exact() -> Self {
        Self { method: EvolutionMethod::ExactExponential, ..Self::default() }
    }

    pub fn t_max_for(&self, gamma: f64) -> f64 {
        self.t_max.unwrap_or(if gamma > 0.0 { 1e4 / gamma } else { 1e4 })
    }
}

#[derive(Debug, Clone)]
pub struct SteadyState {
    pub rho: DensityMatrix,
    /// Simulated time at which the criterion was met.
    pub time: f64,
    pub residual: f64,
}

/// Integrates until the Liouvillian residual drops below the tolerance.
/// `gamma` only sets the default time horizon.
pub fn steady_state_by_integration(
    rho0: &DensityMatrix,
    liouvillian: &Liouvillian,
    gamma: f64,
    opts: SteadyStateOptions,
) -> Result<SteadyState> {
    let d = liouvillian.dim();
    if rho0.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, got: rho0.dim() });
    }
    let t_max = opts.t_max_for(gamma);
    let residual_of = |v: &DVector<C64>| max_abs_slice(liouvillian.apply(v).as_slice());

    let mut v = vectorize(rho0.matrix());
    let mut t = 0.0;
    let mut residual = residual_of(&v);
    let finish = |v: &DVector<C64>, t: f64, residual: f64| -> Result<SteadyState> {
        let m = unvectorize(v, d);
        check_invariants(t, &m)?;
        Ok(SteadyState { rho: DensityMatrix::new_unchecked((&m + m.adjoint()) * C64::new(0.5, 0.0)), time: t, residual })
    };
    if residual < opts.convergence_tol {
        return finish(&v, t, residual);
    }

    match opts.method {
        EvolutionMethod::Adaptive(tol) => {
            let rhs = |x: &[C64], out: &mut [C64]| liouvillian.apply_into(x, out);
            let mut solver = Dopri5::new(rhs, 0.0, v.as_slice().to_vec(), tol);
            while t < t_max {
                t = (t + opts.check_interval).min(t_max);
                solver.advance_to(t)?;
                v = DVector::from_column_slice(solver.y());
                residual = residual_of(&v);
                if residual < opts.convergence_tol {
                    return finish(&v, t, residual);
                }
            }
        }
        EvolutionMethod::ExactExponential => {
            let generator = dense_generator(liouvillian)?;
            let mut step = opts.check_interval;
            let mut prop = (&generator * C64::new(step, 0.0)).exp();
            while t < t_max {
                v = &prop * v;
                t += step;
                residual = residual_of(&v);
                if residual < opts.convergence_tol {
                    return finish(&v, t, residual);
                }
                prop = &prop * &prop;
                step *= 2.0;
            }
        }
    }
    Err(Error::NotConverged { t, residual })
}

fn max_abs_slice(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Orthonormal basis (in the Hilbert–Schmidt sense) of `ker 𝓛`, each element
/// reshaped to a `d × d` matrix. Dense SVD; the kernel is never reduced to a
/// single state.
pub fn steady_state_null_space(liouvillian: &Liouvillian) -> Result<Vec<DMatrix<C64>>> {
    let d = liouvillian.dim();
    let generator = dense_generator(liouvillian)?;
    let svd = generator.svd(false, true);
    let v_t = svd.v_t.ok_or_else(|| Error::Solver("SVD did not return right singular vectors".into()))?;
    let sigma_max = svd.singular_values.max();
    let threshold = 1e-9 * sigma_max.max(1.0);
    let mut kernel = Vec::new();
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s < threshold {
            let v: DVector<C64> = v_t.row(k).adjoint();
            let residual = max_abs_slice(liouvillian.apply(&v).as_slice());
            if residual > 1e-10 {
                return Err(Error::Solver(format!("kernel vector residual {residual:.3e}")));
            }
            kernel.push(unvectorize(&v, d));
        }
    }
    Ok(kernel)
}

/// `Tr[ρ(t) O]` along a trajectory (real part; `O` is Hermitian).
pub fn conserved_charge_trace(trajectory: &Trajectory, op: &OperatorMatrix) -> Vec<f64> {
    trajectory.states.iter().map(|rho| rho.expectation(op).re).collect()
}

/// Largest violation of the single-particle stationarity relations of the
/// bare chain with unit hopping,
///
/// `i[ρ_(j+1)k + ρ_(j-1)k - ρ_j(k+1) - ρ_j(k-1)] = (γ/2) ρ_jk`,
///
/// where the right-hand side is present only when exactly one of `j, k` is the
/// central site. Out-of-range neighbours are dropped.
pub fn residual_of_steady_recursion(rho: &DensityMatrix, gamma: f64) -> Result<f64> {
    let n = rho.dim();
    if n % 2 == 0 {
        return Err(Error::DimensionMismatch { expected: n + 1, got: n });
    }
    let c = (n - 1) / 2;
    let m = rho.matrix();
    let at = |j: isize, k: isize| -> C64 {
        if j < 0 || k < 0 || j >= n as isize || k >= n as isize {
            C64::new(0.0, 0.0)
        } else {
            m[(j as usize, k as usize)]
        }
    };
    let mut worst: f64 = 0.0;
    for j in 0..n {
        for k in 0..n {
            let (ji, ki) = (j as isize, k as isize);
            let lhs = I * (at(ji + 1, ki) + at(ji - 1, ki) - at(ji, ki + 1) - at(ji, ki - 1));
            let damped = (j == c) != (k == c);
            let rhs = if damped { m[(j, k)] * (gamma / 2.0) } else { C64::new(0.0, 0.0) };
            worst = worst.max((lhs - rhs).norm());
        }
    }
    Ok(worst)
}
