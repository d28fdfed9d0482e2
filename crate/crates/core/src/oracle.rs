//! Closed-form results used as ground truth by the tests and the CLI.

use nalgebra::DMatrix;

use crate::entangle::TwoSiteRDM;
use crate::error::{Error, Result};
use crate::lindblad::DensityMatrix;
use crate::linalg::{C64, I};

fn require_odd(n: usize) -> Result<()> {
    if n % 2 == 0 {
        return Err(Error::InvalidLattice(format!("odd number of sites required, got {n}")));
    }
    Ok(())
}

/// Single-particle steady state `1/(N+1) Σ_i (|i⟩⟨i| + |i⟩⟨N-1-i|)`.
pub fn analytic_steady_state(n: usize) -> Result<DensityMatrix> {
    require_odd(n)?;
    let w = C64::new(1.0 / (n as f64 + 1.0), 0.0);
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        m[(i, i)] += w;
        m[(i, n - 1 - i)] += w;
    }
    Ok(DensityMatrix::new_unchecked(m))
}

/// Reduced state of the pair `(i, N-1-i)` of [`analytic_steady_state`],
/// built directly so that very long chains stay cheap.
pub fn analytic_pair_rdm(n: usize) -> Result<TwoSiteRDM> {
    require_odd(n)?;
    if n < 3 {
        return Err(Error::InvalidLattice("a symmetric pair needs at least three sites".into()));
    }
    let w = 1.0 / (n as f64 + 1.0);
    let mut m = DMatrix::zeros(4, 4);
    m[(0, 0)] = C64::new((n as f64 - 1.0) * w, 0.0);
    m[(1, 1)] = C64::new(w, 0.0);
    m[(2, 2)] = C64::new(w, 0.0);
    m[(1, 2)] = C64::new(w, 0.0);
    m[(2, 1)] = C64::new(w, 0.0);
    TwoSiteRDM::new((0, n - 1), m)
}

/// Partial-transpose spectrum of the symmetric steady pair, ascending.
pub fn ppt_eigenvalue_formula(n: usize) -> Result<[f64; 4]> {
    require_odd(n)?;
    if n < 3 {
        return Err(Error::InvalidLattice("a symmetric pair needs at least three sites".into()));
    }
    let nf = n as f64;
    let root = (5.0 - 2.0 * nf + nf * nf).sqrt();
    let mut v = [1.0 / (nf + 1.0), 1.0 / (nf + 1.0), (nf - 1.0 + root) / (2.0 * (nf + 1.0)), (nf - 1.0 - root) / (2.0 * (nf + 1.0))];
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// Three-site single-particle dynamics from `|010⟩`.
#[derive(Debug, Clone, Copy)]
pub struct AnalyticN3Trajectory {
    pub gamma: f64,
}

/// Independent entries of the three-site state; the rest follow from
/// `ρ₁₁ = ρ₁₃ = ρ₃₁ = ρ₃₃`, `ρ₃₂ = ρ₁₂` and Hermiticity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct N3Elements {
    pub rho11: C64,
    pub rho22: C64,
    pub rho12: C64,
    pub rho13: C64,
}

/// `sinh(z)/z`, finite at the origin.
fn sinhc(z: C64) -> C64 {
    if z.norm() < 1e-6 {
        C64::new(1.0, 0.0) + z * z / 6.0
    } else {
        z.sinh() / z
    }
}

impl AnalyticN3Trajectory {
    pub fn new(gamma: f64) -> Self {
        Self { gamma }
    }

    /// `√(γ² − 128)` in complex arithmetic.
    pub fn kappa(&self) -> C64 {
        C64::new(self.gamma * self.gamma - 128.0, 0.0).sqrt()
    }

    pub fn f(&self, t: f64) -> C64 {
        let x = self.kappa() * (t / 4.0);
        x.cosh() + self.gamma * (t / 4.0) * sinhc(x)
    }

    pub fn g(&self, t: f64) -> C64 {
        let x = self.kappa() * (t / 4.0);
        I * 4.0 * (t / 4.0) * sinhc(x)
    }

    pub fn elements(&self, t: f64) -> N3Elements {
        let e = (-t * self.gamma / 4.0).exp();
        let ef = self.f(t) * e;
        let corner = (C64::new(1.0, 0.0) - ef) * 0.25;
        N3Elements { rho11: corner, rho22: (C64::new(1.0, 0.0) + ef) * 0.5, rho12: self.g(t) * e, rho13: corner }
    }

    pub fn matrix(&self, t: f64) -> DMatrix<C64> {
        let el = self.elements(t);
        let (a, b, z) = (el.rho11, el.rho22, el.rho12);
        DMatrix::from_row_slice(3, 3, &[a, z, el.rho13, z.conj(), b, z.conj(), el.rho13, z, a])
    }
}

pub fn analytic_n3_elements(t: f64, gamma: f64) -> N3Elements {
    AnalyticN3Trajectory::new(gamma).elements(t)
}

/// The four five-site stationarity conditions for a reflection-symmetric
/// single-particle state (one-based labels in the comments):
///
/// 1. `i(2ρ₂₂ − ρ₃₃ − ρ₁₃) − γρ₂₃/2`
/// 2. `i(2ρ₁₂ − ρ₂₃) − γρ₁₃/2`
/// 3. `ρ₁₁ + ρ₁₃ − ρ₂₂`
/// 4. `2(ρ₁₁ + ρ₂₂) + ρ₃₃ − 1`
pub fn n5_steady_equations(rho: &DMatrix<C64>, gamma: f64) -> Result<[C64; 4]> {
    if rho.shape() != (5, 5) {
        return Err(Error::DimensionMismatch { expected: 5, got: rho.nrows() });
    }
    let r = |a: usize, b: usize| rho[(a - 1, b - 1)];
    let one = C64::new(1.0, 0.0);
    Ok([
        I * (r(2, 2) * 2.0 - r(3, 3) - r(1, 3)) - r(2, 3) * (gamma / 2.0),
        I * (r(1, 2) * 2.0 - r(2, 3)) - r(1, 3) * (gamma / 2.0),
        r(1, 1) + r(1, 3) - r(2, 2),
        (r(1, 1) + r(2, 2)) * 2.0 + r(3, 3) - one,
    ])
}

/// Largest magnitude among [`n5_steady_equations`].
pub fn n5_steady_residual(rho: &DMatrix<C64>, gamma: f64) -> Result<f64> {
    Ok(n5_steady_equations(rho, gamma)?.iter().map(|z| z.norm()).fold(0.0, f64::max))
}

/// Steady concurrence `2𝒩/(N+1)` of every symmetric pair for even-mode
/// inputs; a conjecture the test suite checks against exact RDMs.
pub fn steady_pair_concurrence(n: usize, n_particles: usize) -> f64 {
    2.0 * n_particles as f64 / (n as f64 + 1.0)
}
