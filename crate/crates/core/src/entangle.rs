//! Two-site reduced states, concurrence and the partial-transpose test.

use std::collections::BTreeMap;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::fock::ManyBodyBasis;
use crate::lindblad::DensityMatrix;
use crate::linalg::{hermitian_eigen, hermitian_eigenvalues, max_abs, C64};

/// Threshold on concurrence and negativity for calling a pair entangled.
pub const ENTANGLEMENT_TOL: f64 = 1e-9;

/// Reduced state of sites `(i, j)`, `i < j`, in the local occupation basis
/// `|00⟩, |01⟩, |10⟩, |11⟩` with site `i` as the first digit.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoSiteRDM {
    sites: (usize, usize),
    matrix: DMatrix<C64>,
}

impl TwoSiteRDM {
    pub fn new(sites: (usize, usize), matrix: DMatrix<C64>) -> Result<Self> {
        if sites.0 >= sites.1 {
            return Err(Error::InvalidPair(sites.0, sites.1));
        }
        if matrix.shape() != (4, 4) {
            return Err(Error::DimensionMismatch { expected: 4, got: matrix.nrows() });
        }
        DensityMatrix::new(matrix.clone())?;
        Ok(Self { sites, matrix })
    }

    pub fn sites(&self) -> (usize, usize) {
        self.sites
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    /// `(p00, p01, p10, p11)`.
    pub fn populations(&self) -> [f64; 4] {
        [0, 1, 2, 3].map(|k| self.matrix[(k, k)].re)
    }

    /// The `|01⟩⟨10|` element, equal to `⟨f_i^† f_j⟩`.
    pub fn coherence(&self) -> C64 {
        self.matrix[(1, 2)]
    }
}

/// Traces out every site except `i < j`. Each Fock state is reordered so the
/// pair sits at the end of the creation string, and the permutation sign is
/// carried into the reduced matrix.
pub fn reduce_to_pair(rho: &DensityMatrix, basis: &ManyBodyBasis, i: usize, j: usize) -> Result<TwoSiteRDM> {
    let n = basis.n_sites();
    if i >= j || j >= n {
        return Err(Error::InvalidPair(i, j));
    }
    if rho.dim() != basis.len() {
        return Err(Error::DimensionMismatch { expected: basis.len(), got: rho.dim() });
    }
    let pair_mask = (1u64 << i) | (1u64 << j);
    let mut groups: BTreeMap<u64, Vec<(usize, usize, f64)>> = BTreeMap::new();
    for (idx, &s) in basis.states().iter().enumerate() {
        let rest = s & !pair_mask;
        let ni = (s >> i) & 1;
        let nj = (s >> j) & 1;
        let above_i = (rest >> (i + 1)).count_ones() as u64;
        let above_j = (rest >> (j + 1)).count_ones() as u64;
        let sign = if (ni * above_i + nj * above_j) % 2 == 0 { 1.0 } else { -1.0 };
        groups.entry(rest).or_default().push(((2 * ni + nj) as usize, idx, sign));
    }
    let m = rho.matrix();
    let mut out = DMatrix::zeros(4, 4);
    for members in groups.values() {
        for &(a, ra, sa) in members {
            for &(b, rb, sb) in members {
                out[(a, b)] += m[(ra, rb)] * (sa * sb);
            }
        }
    }
    TwoSiteRDM::new((i, j), out)
}

fn spin_flip() -> DMatrix<C64> {
    // σ_y ⊗ σ_y
    let mut m = DMatrix::zeros(4, 4);
    m[(0, 3)] = C64::new(-1.0, 0.0);
    m[(3, 0)] = C64::new(-1.0, 0.0);
    m[(1, 2)] = C64::new(1.0, 0.0);
    m[(2, 1)] = C64::new(1.0, 0.0);
    m
}

/// Wootters concurrence `max(0, λ₁ − λ₂ − λ₃ − λ₄)`. With `ρ = W W†` from
/// its eigendecomposition, the `λ` are the singular values of
/// `Wᵀ (σ_y ⊗ σ_y) W`; this avoids square roots of rounding-level
/// eigenvalues.
pub fn concurrence(rdm: &TwoSiteRDM) -> f64 {
    let (p, v) = hermitian_eigen(rdm.matrix());
    let kept: Vec<usize> = (0..4).filter(|&k| p[k] > 1e-14).collect();
    if kept.is_empty() {
        return 0.0;
    }
    let w = DMatrix::from_fn(4, kept.len(), |r, c| v[(r, kept[c])] * p[kept[c]].sqrt());
    let tau = w.transpose() * spin_flip() * &w;
    let mut lambdas: Vec<f64> = tau.singular_values().iter().copied().collect();
    lambdas.sort_by(|a, b| b.total_cmp(a));
    (lambdas[0] - lambdas[1..].iter().sum::<f64>()).max(0.0)
}

/// `2 max(0, |ρ_{01,10}| − √(p00 p11))`, exact for number-conserving pair
/// states.
pub fn x_state_concurrence(rdm: &TwoSiteRDM) -> f64 {
    let p = rdm.populations();
    2.0 * (rdm.coherence().norm() - (p[0].max(0.0) * p[3].max(0.0)).sqrt()).max(0.0)
}

/// Eigenvalues (ascending) of the state transposed on the second site.
pub fn partial_transpose_eigenvalues(rdm: &TwoSiteRDM) -> [f64; 4] {
    let rho = rdm.matrix();
    let pt = DMatrix::from_fn(4, 4, |r, c| {
        let (a1, a2) = (r / 2, r % 2);
        let (b1, b2) = (c / 2, c % 2);
        rho[(2 * a1 + b2, 2 * b1 + a2)]
    });
    let eig = hermitian_eigenvalues(&pt);
    [eig[0], eig[1], eig[2], eig[3]]
}

/// Sum of the magnitudes of negative partial-transpose eigenvalues.
pub fn negativity(rdm: &TwoSiteRDM) -> f64 {
    partial_transpose_eigenvalues(rdm).iter().filter(|&&v| v < 0.0).map(|v| -v).sum()
}

/// Whether every entry off the diagonal and anti-diagonal is below `tol`,
/// together with the largest such magnitude.
pub fn is_x_state(m: &DMatrix<C64>, tol: f64) -> (bool, f64) {
    let d = m.nrows();
    let mut worst: f64 = 0.0;
    for r in 0..d {
        for c in 0..m.ncols() {
            if r != c && r + c + 1 != d {
                worst = worst.max(m[(r, c)].norm());
            }
        }
    }
    (worst < tol, worst)
}

/// Mixes the pair state with the maximally mixed one: `(1 − p) ρ + p I/4`.
pub fn depolarize(rdm: &TwoSiteRDM, p: f64) -> TwoSiteRDM {
    let id = DMatrix::<C64>::identity(4, 4) * C64::new(p / 4.0, 0.0);
    TwoSiteRDM { sites: rdm.sites, matrix: rdm.matrix() * C64::new(1.0 - p, 0.0) + id }
}

/// Largest entry outside the diagonal and the `|01⟩, |10⟩` coherence. Zero
/// for number-conserving states.
pub fn off_block_weight(rdm: &TwoSiteRDM) -> f64 {
    let mut m = rdm.matrix().clone();
    for k in 0..4 {
        m[(k, k)] = C64::new(0.0, 0.0);
    }
    m[(1, 2)] = C64::new(0.0, 0.0);
    m[(2, 1)] = C64::new(0.0, 0.0);
    max_abs(&m)
}
