//! Master-equation machinery for Hermitian jump operators.
//!
//! Density matrices are vectorized by column stacking, so `vec(AρB)` is
//! `(Bᵀ ⊗ A) vec(ρ)` and entry `ρ_ab` sits at position `a + b·d`.

mod dynamics;
mod integrate;

pub use dynamics::{
    conserved_charge_trace, evolve, evolve_with, residual_of_steady_recursion, steady_state_by_integration,
    steady_state_null_space, EvolutionMethod, SteadyState, SteadyStateOptions, Trajectory,
};
pub use integrate::{AdaptiveTolerances, Dopri5};

use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::{CooMatrix, CsrMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::OperatorMatrix;
use crate::linalg::{hermitian_eigenvalues, max_abs, trace, vectorize, C64, I, ONE, ZERO};

/// Validation thresholds for [`DensityMatrix`].
#[derive(Debug, Clone, Copy)]
pub struct StateTolerances {
    pub hermiticity: f64,
    pub trace: f64,
    pub min_eigenvalue: f64,
}

impl Default for StateTolerances {
    fn default() -> Self {
        Self { hermiticity: 1e-10, trace: 1e-9, min_eigenvalue: -1e-8 }
    }
}

/// Hermitian, unit-trace, positive semidefinite matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    matrix: DMatrix<C64>,
}

impl DensityMatrix {
    /// Validates against the default tolerances.
    pub fn new(matrix: DMatrix<C64>) -> Result<Self> {
        let rho = Self::new_unchecked(matrix);
        rho.validate(StateTolerances::default())?;
        Ok(rho)
    }

    pub fn new_unchecked(matrix: DMatrix<C64>) -> Self {
        assert_eq!(matrix.nrows(), matrix.ncols(), "density matrix must be square");
        Self { matrix }
    }

    pub fn from_pure(psi: &DVector<C64>) -> Self {
        let psi = psi / C64::new(psi.norm(), 0.0);
        Self { matrix: &psi * psi.adjoint() }
    }

    /// Convex mixture of pure states with the given weights (renormalized).
    pub fn mixture(states: &[(f64, DVector<C64>)]) -> Self {
        let dim = states[0].1.len();
        let total: f64 = states.iter().map(|s| s.0).sum();
        let mut m = DMatrix::zeros(dim, dim);
        for (w, psi) in states {
            let psi = psi / C64::new(psi.norm(), 0.0);
            m += (&psi * psi.adjoint()) * C64::new(w / total, 0.0);
        }
        Self { matrix: m }
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self { matrix: DMatrix::identity(dim, dim) / C64::new(dim as f64, 0.0) }
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.matrix[(row, col)]
    }

    pub fn trace(&self) -> C64 {
        trace(&self.matrix)
    }

    pub fn purity(&self) -> f64 {
        (&self.matrix * &self.matrix).trace().re
    }

    pub fn hermiticity_error(&self) -> f64 {
        max_abs(&(&self.matrix - self.matrix.adjoint()))
    }

    pub fn min_eigenvalue(&self) -> f64 {
        hermitian_eigenvalues(&self.matrix).first().copied().unwrap_or(0.0)
    }

    pub fn validate(&self, tol: StateTolerances) -> Result<()> {
        let herm = self.hermiticity_error();
        if herm > tol.hermiticity {
            return Err(Error::InvalidState(format!("hermiticity error {herm:.3e}")));
        }
        let tr = (self.trace() - ONE).norm();
        if tr > tol.trace {
            return Err(Error::InvalidState(format!("trace deviates from 1 by {tr:.3e}")));
        }
        let min = self.min_eigenvalue();
        if min < tol.min_eigenvalue {
            return Err(Error::InvalidState(format!("negative eigenvalue {min:.3e}")));
        }
        Ok(())
    }

    pub fn expectation(&self, op: &OperatorMatrix) -> C64 {
        op.expectation(&self.matrix)
    }

    /// `V† ρ V`, the state seen inside an invariant subspace.
    pub fn restrict(&self, isometry: &DMatrix<C64>) -> DensityMatrix {
        DensityMatrix { matrix: isometry.adjoint() * &self.matrix * isometry }
    }

    /// `V ρ V†`, embedding a subspace state back into the full space.
    pub fn lift(&self, isometry: &DMatrix<C64>) -> DensityMatrix {
        DensityMatrix { matrix: isometry * &self.matrix * isometry.adjoint() }
    }

    /// Flat `[re, im]` pairs in row-major order, for JSON snapshots.
    pub fn to_flat_pairs(&self) -> Vec<[f64; 2]> {
        let d = self.dim();
        (0..d).flat_map(|r| (0..d).map(move |c| (r, c))).map(|(r, c)| [self.matrix[(r, c)].re, self.matrix[(r, c)].im]).collect()
    }

    pub fn from_flat_pairs(dim: usize, pairs: &[[f64; 2]]) -> Result<Self> {
        if pairs.len() != dim * dim {
            return Err(Error::DimensionMismatch { expected: dim * dim, got: pairs.len() });
        }
        Self::new(DMatrix::from_fn(dim, dim, |r, c| {
            let p = pairs[r * dim + c];
            C64::new(p[0], p[1])
        }))
    }
}

/// JSON snapshot of a density matrix.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DensitySnapshot {
    pub dim: usize,
    pub time: Option<f64>,
    /// Row-major `[re, im]` pairs.
    pub entries: Vec<[f64; 2]>,
}

impl DensitySnapshot {
    pub fn new(rho: &DensityMatrix, time: Option<f64>) -> Self {
        Self { dim: rho.dim(), time, entries: rho.to_flat_pairs() }
    }

    pub fn to_density(&self) -> Result<DensityMatrix> {
        DensityMatrix::from_flat_pairs(self.dim, &self.entries)
    }
}

/// Sparse superoperator acting on column-stacked density matrices.
#[derive(Debug, Clone)]
pub struct Liouvillian {
    dim: usize,
    matrix: CsrMatrix<C64>,
}

/// Builds `ρ ↦ -i[H, ρ] + γ (LρL - ½{L², ρ})` for the central-site number
/// operator `L`.
pub fn build_liouvillian(h: &OperatorMatrix, gamma: f64, central_number: &OperatorMatrix) -> Result<Liouvillian> {
    Liouvillian::with_jumps(h, &[(gamma, central_number)])
}

impl Liouvillian {
    /// General form with Hermitian jump operators and their rates.
    pub fn with_jumps(h: &OperatorMatrix, jumps: &[(f64, &OperatorMatrix)]) -> Result<Self> {
        let d = h.dim();
        for &(rate, l) in jumps {
            if !(rate >= 0.0) {
                return Err(Error::NegativeRate(rate));
            }
            if l.dim() != d {
                return Err(Error::DimensionMismatch { expected: d, got: l.dim() });
            }
        }
        let idx = |a: usize, b: usize| a + b * d;
        let mut coo = CooMatrix::new(d * d, d * d);
        let h_entries = h.entries();
        for &(a, c, v) in &h_entries {
            // -i H ρ  and  +i ρ H
            for b in 0..d {
                coo.push(idx(a, b), idx(c, b), -I * v);
                coo.push(idx(b, c), idx(b, a), I * v);
            }
        }
        for &(rate, l) in jumps {
            if rate == 0.0 {
                continue;
            }
            let g = C64::new(rate, 0.0);
            let l_entries = l.entries();
            for &(a, c, v) in &l_entries {
                for &(e, b, w) in &l_entries {
                    coo.push(idx(a, b), idx(c, e), g * v * w);
                }
            }
            let half = g * 0.5;
            for (a, c, v) in sparse_square(d, &l_entries) {
                for b in 0..d {
                    coo.push(idx(a, b), idx(c, b), -half * v);
                    coo.push(idx(b, c), idx(b, a), -half * v);
                }
            }
        }
        Ok(Self { dim: d, matrix: CsrMatrix::from(&coo) })
    }

    /// Hilbert-space dimension `d`; the superoperator is `d² × d²`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.matrix.nnz()
    }

    pub fn apply_into(&self, x: &[C64], out: &mut [C64]) {
        for (r, row) in self.matrix.row_iter().enumerate() {
            let mut acc = ZERO;
            for (&c, v) in row.col_indices().iter().zip(row.values()) {
                acc += v * x[c];
            }
            out[r] = acc;
        }
    }

    pub fn apply(&self, x: &DVector<C64>) -> DVector<C64> {
        let mut out = DVector::zeros(x.len());
        self.apply_into(x.as_slice(), out.as_mut_slice());
        out
    }

    /// `dρ/dt` for a matrix-shaped `ρ`.
    pub fn apply_to(&self, rho: &DMatrix<C64>) -> DMatrix<C64> {
        let v = self.apply(&vectorize(rho));
        DMatrix::from_column_slice(self.dim, self.dim, v.as_slice())
    }

    /// `‖𝓛 vec(ρ)‖∞`.
    pub fn residual(&self, rho: &DMatrix<C64>) -> f64 {
        max_abs(&self.apply_to(rho))
    }

    pub fn adjoint_apply(&self, x: &DVector<C64>) -> DVector<C64> {
        let mut out = DVector::zeros(x.len());
        for (r, c, v) in self.matrix.triplet_iter() {
            out[c] += v.conj() * x[r];
        }
        out
    }

    /// `‖𝓛† vec(I)‖∞`; zero for a trace-preserving generator.
    pub fn trace_preservation_error(&self) -> f64 {
        let id = vectorize(&DMatrix::identity(self.dim, self.dim));
        self.adjoint_apply(&id).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let n = self.dim * self.dim;
        let mut m = DMatrix::zeros(n, n);
        for (r, c, v) in self.matrix.triplet_iter() {
            m[(r, c)] += *v;
        }
        m
    }
}

fn sparse_square(d: usize, entries: &[(usize, usize, C64)]) -> Vec<(usize, usize, C64)> {
    let mut rows: Vec<Vec<(usize, C64)>> = vec![Vec::new(); d];
    for &(r, c, v) in entries {
        rows[r].push((c, v));
    }
    let mut out = Vec::new();
    for (a, row) in rows.iter().enumerate() {
        let mut acc: std::collections::BTreeMap<usize, C64> = Default::default();
        for &(c, v) in row {
            for &(b, w) in &rows[c] {
                *acc.entry(b).or_insert(ZERO) += v * w;
            }
        }
        out.extend(acc.into_iter().filter(|(_, v)| *v != ZERO).map(|(b, v)| (a, b, v)));
    }
    out
}
