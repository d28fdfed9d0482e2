//! Two-point correlation dynamics for the quadratic problem.
//!
//! With `H = Σ h_ab f_a^† f_b` and the single jump `n_c`, the equations for
//! `C_jk = ⟨f_j^† f_k⟩` close:
//!
//! `dC/dt = i (hᵀ C − C hᵀ) − (γ/2) D ∘ C`, with `D_jk = (δ_jc − δ_kc)²`.
//!
//! For a single particle `C = ρᵀ`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::fock::{apply_hop, ManyBodyBasis};
use crate::lindblad::{AdaptiveTolerances, DensityMatrix, Dopri5};
use crate::linalg::{hermitian_eigenvalues, max_abs, to_complex, C64, I};
use crate::model::{build_single_particle_hamiltonian, LatticeSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    matrix: DMatrix<C64>,
}

impl CorrelationMatrix {
    /// Checks Hermiticity and `0 ≤ eigenvalues ≤ 1` (to 1e-8).
    pub fn new(matrix: DMatrix<C64>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::DimensionMismatch { expected: matrix.nrows(), got: matrix.ncols() });
        }
        let herm = max_abs(&(&matrix - matrix.adjoint()));
        if herm > 1e-10 {
            return Err(Error::InvalidState(format!("correlation matrix not Hermitian ({herm:.3e})")));
        }
        let eig = hermitian_eigenvalues(&matrix);
        if let (Some(&lo), Some(&hi)) = (eig.first(), eig.last()) {
            if lo < -1e-8 || hi > 1.0 + 1e-8 {
                return Err(Error::InvalidState(format!("occupations outside [0, 1]: [{lo:.3e}, {hi:.3e}]")));
            }
        }
        Ok(Self { matrix })
    }

    pub fn new_unchecked(matrix: DMatrix<C64>) -> Self {
        Self { matrix }
    }

    /// `C_jk = Tr[ρ f_j^† f_k]` on the sector described by `basis`.
    pub fn from_density(rho: &DensityMatrix, basis: &ManyBodyBasis) -> Result<Self> {
        if rho.dim() != basis.len() {
            return Err(Error::DimensionMismatch { expected: basis.len(), got: rho.dim() });
        }
        let n = basis.n_sites();
        let m = rho.matrix();
        let mut c = DMatrix::zeros(n, n);
        for (col, &s) in basis.states().iter().enumerate() {
            for j in 0..n {
                for k in 0..n {
                    if let Some((t, sign)) = apply_hop(s, j, k) {
                        let row = basis.index_of(t).expect("hop preserves particle number");
                        c[(j, k)] += m[(col, row)] * sign;
                    }
                }
            }
        }
        Ok(Self { matrix: c })
    }

    /// Correlations of a single-particle density matrix (`C = ρᵀ`).
    pub fn from_single_particle(rho: &DensityMatrix) -> Self {
        Self { matrix: rho.matrix().transpose() }
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn n_sites(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn get(&self, j: usize, k: usize) -> C64 {
        self.matrix[(j, k)]
    }

    /// `Tr C`, the particle number.
    pub fn trace(&self) -> f64 {
        self.matrix.trace().re
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        hermitian_eigenvalues(&self.matrix)
    }

    /// Row-major `(j, k, C_jk)` triples.
    pub fn grid(&self) -> impl Iterator<Item = (usize, usize, C64)> + '_ {
        let n = self.n_sites();
        (0..n).flat_map(move |j| (0..n).map(move |k| (j, k, self.matrix[(j, k)])))
    }
}

/// Generator of the closed correlation dynamics.
#[derive(Debug, Clone)]
pub struct CorrelationDynamics {
    h: DMatrix<C64>,
    gamma: f64,
    center: usize,
}

impl CorrelationDynamics {
    pub fn new(h: DMatrix<C64>, gamma: f64, center: usize) -> Result<Self> {
        let n = h.nrows();
        if h.ncols() != n {
            return Err(Error::DimensionMismatch { expected: n, got: h.ncols() });
        }
        if center >= n {
            return Err(Error::SiteOutOfRange { index: center, sites: n });
        }
        if !(gamma >= 0.0) {
            return Err(Error::NegativeRate(gamma));
        }
        Ok(Self { h, gamma, center })
    }

    /// Refuses interacting lattices: the hierarchy does not close there.
    pub fn from_spec(spec: &LatticeSpec, include_trap: bool) -> Result<Self> {
        if spec.interaction != 0.0 {
            return Err(Error::FastpathRefused(format!("nearest-neighbour interaction {} makes the dynamics non-quadratic", spec.interaction)));
        }
        let h = build_single_particle_hamiltonian(spec, include_trap)?;
        Self::new(to_complex(&h), spec.dephasing_gamma, spec.central_site())
    }

    pub fn n_sites(&self) -> usize {
        self.h.nrows()
    }

    /// `dC/dt` in column-major flattened form.
    fn rhs(&self, c: &[C64], out: &mut [C64]) {
        let n = self.n_sites();
        let at = |j: usize, k: usize| c[j + k * n];
        for k in 0..n {
            for j in 0..n {
                let mut acc = C64::new(0.0, 0.0);
                for m in 0..n {
                    // (hᵀ C)_jk = h_mj C_mk ; (C hᵀ)_jk = C_jm h_km
                    acc += self.h[(m, j)] * at(m, k) - at(j, m) * self.h[(k, m)];
                }
                let mut v = I * acc;
                if (j == self.center) != (k == self.center) {
                    v -= at(j, k) * (self.gamma / 2.0);
                }
                out[j + k * n] = v;
            }
        }
    }

    pub fn derivative(&self, c: &CorrelationMatrix) -> DMatrix<C64> {
        let n = self.n_sites();
        let mut out = DMatrix::zeros(n, n);
        self.rhs(c.matrix.as_slice(), out.as_mut_slice());
        out
    }

    /// `C(t)` at each sample time (strictly increasing, from `t = 0`).
    pub fn evolve(&self, c0: &CorrelationMatrix, times: &[f64], tol: AdaptiveTolerances) -> Result<Vec<CorrelationMatrix>> {
        let n = self.n_sites();
        if c0.n_sites() != n {
            return Err(Error::DimensionMismatch { expected: n, got: c0.n_sites() });
        }
        if times.first().is_some_and(|&t| !(t >= 0.0)) || times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Config("sample times must be non-negative and strictly increasing".into()));
        }
        let mut solver = Dopri5::new(|x: &[C64], out: &mut [C64]| self.rhs(x, out), 0.0, c0.matrix.as_slice().to_vec(), tol);
        let tr0 = c0.trace();
        let mut out = Vec::with_capacity(times.len());
        for &t in times {
            solver.advance_to(t)?;
            let m = DMatrix::from_column_slice(n, n, solver.y());
            let drift = (m.trace().re - tr0).abs();
            if drift > 1e-8 {
                return Err(Error::InvariantViolation { t, what: "correlation trace drift", value: drift });
            }
            out.push(CorrelationMatrix { matrix: m });
        }
        Ok(out)
    }

    /// Integrates until `‖dC/dt‖∞ < tol`.
    pub fn steady_state(&self, c0: &CorrelationMatrix, tol: f64, t_max: f64) -> Result<(CorrelationMatrix, f64)> {
        let n = self.n_sites();
        let mut solver =
            Dopri5::new(|x: &[C64], out: &mut [C64]| self.rhs(x, out), 0.0, c0.matrix.as_slice().to_vec(), AdaptiveTolerances::default());
        let mut t = 0.0;
        let mut scratch = vec![C64::new(0.0, 0.0); n * n];
        loop {
            self.rhs(solver.y(), &mut scratch);
            let residual = scratch.iter().map(|z| z.norm()).fold(0.0, f64::max);
            if residual < tol {
                let m = DMatrix::from_column_slice(n, n, solver.y());
                return Ok((CorrelationMatrix { matrix: m }, t));
            }
            if t >= t_max {
                return Err(Error::NotConverged { t, residual });
            }
            t = (t + 1.0).min(t_max);
            solver.advance_to(t)?;
        }
    }
}

/// Free-function form of [`CorrelationDynamics::evolve`] with default tolerances.
pub fn correlation_evolve(c0: &CorrelationMatrix, h: &DMatrix<C64>, gamma: f64, center: usize, times: &[f64]) -> Result<Vec<CorrelationMatrix>> {
    CorrelationDynamics::new(h.clone(), gamma, center)?.evolve(c0, times, AdaptiveTolerances::default())
}

/// `C_𝒩 = 𝒩 C_sp`, valid for even-mode Slater inputs with
/// `𝒩 ≤ (N+1)/2`. The occupation bound is checked.
pub fn multiparticle_scaling(c_sp: &CorrelationMatrix, n_particles: usize) -> Result<CorrelationMatrix> {
    let n = c_sp.n_sites();
    if n_particles == 0 || n_particles > n.div_ceil(2) {
        return Err(Error::ParticlesOutOfRange { sites: n, particles: n_particles });
    }
    let scaled = &c_sp.matrix * C64::new(n_particles as f64, 0.0);
    let top = hermitian_eigenvalues(&scaled).last().copied().unwrap_or(0.0);
    if top > 1.0 + 1e-9 {
        return Err(Error::ScalingBoundViolated(top));
    }
    Ok(CorrelationMatrix { matrix: scaled })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{bilinear_operator, build_many_body_hamiltonian, number_operator};
    use crate::lindblad::{build_liouvillian, evolve, EvolutionMethod};
    use crate::linalg::ONE;
    use nalgebra::DVector;

    fn diag(values: &[f64]) -> CorrelationMatrix {
        CorrelationMatrix::new(DMatrix::from_diagonal(&DVector::from_iterator(values.len(), values.iter().map(|&v| C64::new(v, 0.0)))))
            .unwrap()
    }

    #[test]
    fn central_occupation_is_not_damped() {
        let dyns = CorrelationDynamics::from_spec(&LatticeSpec::new(3).with_gamma(5.0), false).unwrap();
        // Only the dissipator acts on a state with no hopping currents.
        let c = CorrelationMatrix::new_unchecked(DMatrix::from_fn(3, 3, |j, k| if j == 1 && k == 1 { ONE } else { C64::new(0.0, 0.0) }));
        assert_eq!(dyns.derivative(&c)[(1, 1)], C64::new(0.0, 0.0));
    }

    #[test]
    fn matches_liouvillian_on_three_sites() {
        // Fixes the orientation of the coherent term.
        let spec = LatticeSpec::new(3).with_gamma(0.9);
        let b = ManyBodyBasis::new(3, 1).unwrap();
        let h = build_many_body_hamiltonian(&spec, &b, false).unwrap();
        let l = build_liouvillian(&h, 0.9, &number_operator(&b, 1).unwrap()).unwrap();
        let psi = DVector::from_vec(vec![C64::new(0.6, 0.0), C64::new(0.0, 0.8), C64::new(0.0, 0.0)]);
        let rho0 = DensityMatrix::from_pure(&psi);
        let times: Vec<f64> = (1..=10).map(|k| k as f64 * 0.37).collect();
        let full = evolve(&rho0, &l, &times, EvolutionMethod::ExactExponential).unwrap();
        let dyns = CorrelationDynamics::from_spec(&spec, false).unwrap();
        let fast = dyns.evolve(&CorrelationMatrix::from_density(&rho0, &b).unwrap(), &times, AdaptiveTolerances::default()).unwrap();
        for (rho, c) in full.states.iter().zip(&fast) {
            for j in 0..3 {
                for k in 0..3 {
                    let want = rho.expectation(&bilinear_operator(&b, j, k).unwrap());
                    assert!((want - c.get(j, k)).norm() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn three_site_steady_correlations() {
        let dyns = CorrelationDynamics::from_spec(&LatticeSpec::new(3), false).unwrap();
        let (c, _) = dyns.steady_state(&diag(&[0.0, 1.0, 0.0]), 1e-9, 1e4).unwrap();
        let want = [[0.25, 0.0, 0.25], [0.0, 0.5, 0.0], [0.25, 0.0, 0.25]];
        for j in 0..3 {
            for k in 0..3 {
                assert!((c.get(j, k) - C64::new(want[j][k], 0.0)).norm() < 1e-8);
            }
        }
    }

    #[test]
    fn interacting_lattice_is_refused() {
        let err = CorrelationDynamics::from_spec(&LatticeSpec::new(5).with_interaction(0.1), false).unwrap_err();
        assert!(matches!(err, Error::FastpathRefused(_)));
    }

    #[test]
    fn scaling_law() {
        let c = diag(&[0.2, 0.3, 0.5]);
        assert_eq!(multiparticle_scaling(&c, 1).unwrap(), c);
        let c2 = multiparticle_scaling(&c, 2).unwrap();
        assert!((c2.trace() - 2.0).abs() < 1e-14);
        assert!(matches!(multiparticle_scaling(&diag(&[0.0, 0.6, 0.4]), 2), Err(Error::ScalingBoundViolated(_))));
        assert!(multiparticle_scaling(&c, 3).is_err());
    }

    #[test]
    fn rejects_invalid_correlations() {
        assert!(CorrelationMatrix::new(DMatrix::from_element(2, 2, C64::new(0.0, 1.0))).is_err());
        assert!(CorrelationMatrix::new(DMatrix::from_diagonal_element(2, 2, C64::new(1.5, 0.0))).is_err());
    }
}
