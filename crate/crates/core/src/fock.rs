//! Fock-space machinery for spinless fermions on an open chain.
//!
//! A basis state is a bitmask with bit `s` set when site `s` (zero-based) is
//! occupied. Its vector is `f_{s1}^† f_{s2}^† … |0⟩` with `s1 < s2 < …`; every
//! sign in this module follows from that single ordering.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::{CooMatrix, CsrMatrix};

use crate::error::{Error, Result};
use crate::linalg::{binomial, det, hermitian_eigen, C64, ONE, ZERO};
use crate::model::{build_single_particle_hamiltonian, LatticeSpec, Parity, ParityClassification, SingleParticleModes};

/// Fixed-particle-number Fock basis, ordered lexicographically on the sorted
/// tuple of occupied sites. For one particle, basis index equals site index.
#[derive(Debug, Clone)]
pub struct ManyBodyBasis {
    n_sites: usize,
    n_particles: usize,
    states: Vec<u64>,
    index: HashMap<u64, usize>,
}

impl ManyBodyBasis {
    pub fn new(n_sites: usize, n_particles: usize) -> Result<Self> {
        if n_particles > n_sites || n_sites > 63 {
            return Err(Error::ParticlesOutOfRange { sites: n_sites, particles: n_particles });
        }
        let mut states = Vec::with_capacity(binomial(n_sites, n_particles));
        let mut sites = Vec::with_capacity(n_particles);
        combinations(n_sites, n_particles, 0, &mut sites, &mut |combo| {
            states.push(combo.iter().fold(0u64, |acc, &s| acc | (1 << s)));
        });
        let index = states.iter().enumerate().map(|(i, &s)| (s, i)).collect();
        Ok(Self { n_sites, n_particles, states, index })
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn n_particles(&self) -> usize {
        self.n_particles
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[u64] {
        &self.states
    }

    pub fn state(&self, idx: usize) -> u64 {
        self.states[idx]
    }

    pub fn index_of(&self, state: u64) -> Option<usize> {
        self.index.get(&state).copied()
    }

    /// Occupation string with site 1 leftmost, e.g. `"010"`.
    pub fn bitstring(&self, idx: usize) -> String {
        format_bitstring(self.states[idx], self.n_sites)
    }

    pub fn parse_bitstring(&self, text: &str) -> Result<u64> {
        let bits = parse_bitstring(text, self.n_sites)?;
        if bits.count_ones() as usize != self.n_particles {
            return Err(Error::InvalidBitstring(text.to_string()));
        }
        Ok(bits)
    }

    fn check_site(&self, site: usize) -> Result<()> {
        if site >= self.n_sites {
            return Err(Error::SiteOutOfRange { index: site, sites: self.n_sites });
        }
        Ok(())
    }
}

fn combinations(n: usize, k: usize, start: usize, current: &mut Vec<usize>, emit: &mut impl FnMut(&[usize])) {
    if current.len() == k {
        emit(current);
        return;
    }
    let remaining = k - current.len();
    for s in start..=n.saturating_sub(remaining) {
        if s >= n {
            break;
        }
        current.push(s);
        combinations(n, k, s + 1, current, emit);
        current.pop();
    }
}

pub fn format_bitstring(state: u64, n_sites: usize) -> String {
    (0..n_sites).map(|s| if state >> s & 1 == 1 { '1' } else { '0' }).collect()
}

pub fn parse_bitstring(text: &str, n_sites: usize) -> Result<u64> {
    let text = text.trim().trim_start_matches('|').trim_end_matches('⟩').trim_end_matches('>');
    if text.chars().count() != n_sites {
        return Err(Error::InvalidBitstring(text.to_string()));
    }
    let mut bits = 0u64;
    for (s, ch) in text.chars().enumerate() {
        match ch {
            '1' => bits |= 1 << s,
            '0' => {}
            _ => return Err(Error::InvalidBitstring(text.to_string())),
        }
    }
    Ok(bits)
}

fn occupied(state: u64, site: usize) -> bool {
    state >> site & 1 == 1
}

fn occupied_below(state: u64, site: usize) -> u32 {
    (state & ((1u64 << site) - 1)).count_ones()
}

fn parity_sign(count: u32) -> f64 {
    if count % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Applies `f_i^† f_j` to a basis state, returning the image and its sign.
pub fn apply_hop(state: u64, i: usize, j: usize) -> Option<(u64, f64)> {
    if i == j {
        return occupied(state, i).then_some((state, 1.0));
    }
    if !occupied(state, j) {
        return None;
    }
    let removed = state & !(1 << j);
    if occupied(removed, i) {
        return None;
    }
    let sign = parity_sign(occupied_below(state, j)) * parity_sign(occupied_below(removed, i));
    Some((removed | (1 << i), sign))
}

/// Sign of the permutation that sorts `order` ascending, by inversion count.
pub fn reorder_sign(order: &[usize]) -> f64 {
    let mut inversions = 0u32;
    for a in 0..order.len() {
        for b in a + 1..order.len() {
            if order[a] > order[b] {
                inversions += 1;
            }
        }
    }
    parity_sign(inversions)
}

#[derive(Debug, Clone)]
enum Storage {
    Dense(DMatrix<C64>),
    Sparse(CsrMatrix<C64>),
}

/// Complex operator on a Fock sector (or any finite space). Stored densely up
/// to [`OperatorMatrix::SPARSE_THRESHOLD`] and as CSR above it.
#[derive(Debug, Clone)]
pub struct OperatorMatrix {
    dim: usize,
    storage: Storage,
}

impl OperatorMatrix {
    pub const SPARSE_THRESHOLD: usize = 64;

    /// Builds from `(row, col, value)` entries; duplicates are summed.
    pub fn from_triplets(dim: usize, entries: impl IntoIterator<Item = (usize, usize, C64)>) -> Self {
        if dim > Self::SPARSE_THRESHOLD {
            let mut coo = CooMatrix::new(dim, dim);
            for (r, c, v) in entries {
                coo.push(r, c, v);
            }
            Self { dim, storage: Storage::Sparse(CsrMatrix::from(&coo)) }
        } else {
            let mut m = DMatrix::zeros(dim, dim);
            for (r, c, v) in entries {
                m[(r, c)] += v;
            }
            Self { dim, storage: Storage::Dense(m) }
        }
    }

    pub fn from_dense(m: DMatrix<C64>) -> Self {
        assert_eq!(m.nrows(), m.ncols(), "operator must be square");
        let dim = m.nrows();
        if dim > Self::SPARSE_THRESHOLD {
            let entries: Vec<_> = (0..dim)
                .flat_map(|c| (0..dim).map(move |r| (r, c)))
                .filter(|&(r, c)| m[(r, c)] != ZERO)
                .map(|(r, c)| (r, c, m[(r, c)]))
                .collect();
            Self::from_triplets(dim, entries)
        } else {
            Self { dim, storage: Storage::Dense(m) }
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_triplets(dim, (0..dim).map(|i| (i, i, ONE)))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_sparse(&self) -> bool {
        matches!(self.storage, Storage::Sparse(_))
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        match &self.storage {
            Storage::Dense(m) => m.clone(),
            Storage::Sparse(s) => {
                let mut m = DMatrix::zeros(self.dim, self.dim);
                for (r, c, v) in s.triplet_iter() {
                    m[(r, c)] += *v;
                }
                m
            }
        }
    }

    /// Non-zero entries in row-major order.
    pub fn entries(&self) -> Vec<(usize, usize, C64)> {
        match &self.storage {
            Storage::Dense(m) => {
                let mut out = Vec::new();
                for r in 0..self.dim {
                    for c in 0..self.dim {
                        if m[(r, c)] != ZERO {
                            out.push((r, c, m[(r, c)]));
                        }
                    }
                }
                out
            }
            Storage::Sparse(s) => s.triplet_iter().filter(|t| *t.2 != ZERO).map(|(r, c, v)| (r, c, *v)).collect(),
        }
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        match &self.storage {
            Storage::Dense(m) => m[(row, col)],
            Storage::Sparse(s) => s.get_entry(row, col).map(|e| e.into_value()).unwrap_or(ZERO),
        }
    }

    pub fn apply(&self, v: &DVector<C64>) -> DVector<C64> {
        match &self.storage {
            Storage::Dense(m) => m * v,
            Storage::Sparse(s) => {
                let mut out = DVector::zeros(self.dim);
                for (r, row) in s.row_iter().enumerate() {
                    let mut acc = ZERO;
                    for (&c, val) in row.col_indices().iter().zip(row.values()) {
                        acc += val * v[c];
                    }
                    out[r] = acc;
                }
                out
            }
        }
    }

    /// `O · M` for a dense `M`.
    pub fn left_mul(&self, m: &DMatrix<C64>) -> DMatrix<C64> {
        match &self.storage {
            Storage::Dense(o) => o * m,
            Storage::Sparse(s) => {
                let mut out = DMatrix::zeros(self.dim, m.ncols());
                for (r, c, v) in s.triplet_iter() {
                    for k in 0..m.ncols() {
                        out[(r, k)] += v * m[(c, k)];
                    }
                }
                out
            }
        }
    }

    /// `Tr[ρ O]`.
    pub fn expectation(&self, rho: &DMatrix<C64>) -> C64 {
        match &self.storage {
            Storage::Dense(o) => o.component_mul(&rho.transpose()).sum(),
            Storage::Sparse(s) => s.triplet_iter().map(|(r, c, v)| v * rho[(c, r)]).sum(),
        }
    }

    pub fn expectation_in(&self, psi: &DVector<C64>) -> C64 {
        psi.dotc(&self.apply(psi))
    }

    pub fn hermiticity_error(&self) -> f64 {
        self.entries().iter().map(|&(r, c, v)| (v - self.get(c, r).conj()).norm()).fold(0.0, f64::max)
    }

    /// `V† O V` for an isometry `V` (columns orthonormal).
    pub fn project(&self, isometry: &DMatrix<C64>) -> OperatorMatrix {
        OperatorMatrix::from_dense(isometry.adjoint() * self.left_mul(isometry))
    }

    pub fn scaled(&self, factor: C64) -> OperatorMatrix {
        match &self.storage {
            Storage::Dense(m) => Self { dim: self.dim, storage: Storage::Dense(m * factor) },
            Storage::Sparse(_) => {
                Self::from_triplets(self.dim, self.entries().into_iter().map(|(r, c, v)| (r, c, v * factor)))
            }
        }
    }

    pub fn plus(&self, other: &OperatorMatrix) -> OperatorMatrix {
        assert_eq!(self.dim, other.dim);
        Self::from_triplets(self.dim, self.entries().into_iter().chain(other.entries()))
    }

    /// Frobenius norm of `[self, other]`.
    pub fn commutator_norm(&self, other: &OperatorMatrix) -> f64 {
        let a = self.to_dense();
        let b = other.to_dense();
        (&a * &b - &b * &a).norm()
    }
}

/// `f_i^† f_j` on a sector (zero-based sites).
pub fn bilinear_operator(basis: &ManyBodyBasis, i: usize, j: usize) -> Result<OperatorMatrix> {
    basis.check_site(i)?;
    basis.check_site(j)?;
    let entries: Vec<_> = basis
        .states()
        .iter()
        .enumerate()
        .filter_map(|(col, &s)| {
            apply_hop(s, i, j).map(|(t, sign)| (basis.index_of(t).expect("hop preserves particle number"), col, C64::new(sign, 0.0)))
        })
        .collect();
    Ok(OperatorMatrix::from_triplets(basis.len(), entries))
}

pub fn number_operator(basis: &ManyBodyBasis, site: usize) -> Result<OperatorMatrix> {
    bilinear_operator(basis, site, site)
}

pub fn total_number_operator(basis: &ManyBodyBasis) -> OperatorMatrix {
    let n = C64::new(basis.n_particles() as f64, 0.0);
    OperatorMatrix::from_triplets(basis.len(), (0..basis.len()).map(|i| (i, i, n)))
}

/// Second quantization of a single-particle matrix: `Σ h_ij f_i^† f_j`.
pub fn quadratic_operator(basis: &ManyBodyBasis, h: &DMatrix<C64>) -> Result<OperatorMatrix> {
    let n = basis.n_sites();
    if h.nrows() != n || h.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, got: h.nrows() });
    }
    let mut entries = Vec::new();
    for (col, &s) in basis.states().iter().enumerate() {
        for i in 0..n {
            for j in 0..n {
                let hij = h[(i, j)];
                if hij == ZERO {
                    continue;
                }
                if let Some((t, sign)) = apply_hop(s, i, j) {
                    entries.push((basis.index_of(t).unwrap(), col, hij * sign));
                }
            }
        }
    }
    Ok(OperatorMatrix::from_triplets(basis.len(), entries))
}

/// Many-body Hamiltonian: quadratic part from the single-particle matrix plus
/// `V_int Σ n_i n_{i+1}` over the open-chain bonds.
pub fn build_many_body_hamiltonian(spec: &LatticeSpec, basis: &ManyBodyBasis, include_trap: bool) -> Result<OperatorMatrix> {
    if spec.n_sites != basis.n_sites() {
        return Err(Error::DimensionMismatch { expected: spec.n_sites, got: basis.n_sites() });
    }
    let h = build_single_particle_hamiltonian(spec, include_trap)?;
    let quadratic = quadratic_operator(basis, &h.map(|x| C64::new(x, 0.0)))?;
    if spec.interaction == 0.0 {
        return Ok(quadratic);
    }
    let n = basis.n_sites();
    let interaction = basis.states().iter().enumerate().filter_map(|(k, &s)| {
        let bonds = (0..n - 1).filter(|&i| occupied(s, i) && occupied(s, i + 1)).count();
        (bonds > 0).then(|| (k, k, C64::new(spec.interaction * bonds as f64, 0.0)))
    });
    Ok(OperatorMatrix::from_triplets(basis.len(), quadratic.entries().into_iter().chain(interaction)))
}

/// Site reflection `R f_i R = f_{N-1-i}` with `R|0⟩ = |0⟩`. The sign of each
/// image is the parity of reordering the reflected creation string back into
/// ascending order.
pub fn reflection_operator(basis: &ManyBodyBasis) -> OperatorMatrix {
    let n = basis.n_sites();
    let entries = basis.states().iter().enumerate().map(|(col, &s)| {
        let reflected: Vec<usize> = (0..n).filter(|&i| occupied(s, i)).map(|i| n - 1 - i).collect();
        let image = reflected.iter().fold(0u64, |acc, &i| acc | (1 << i));
        (basis.index_of(image).unwrap(), col, C64::new(reorder_sign(&reflected), 0.0))
    });
    OperatorMatrix::from_triplets(basis.len(), entries.collect::<Vec<_>>())
}

/// Hidden charge `-1/2 + Σ_i f_i^† f_{N-1-i}`.
pub fn charge_operator(basis: &ManyBodyBasis) -> OperatorMatrix {
    let n = basis.n_sites();
    let mut entries: Vec<_> = (0..basis.len()).map(|k| (k, k, C64::new(-0.5, 0.0))).collect();
    for (col, &s) in basis.states().iter().enumerate() {
        for i in 0..n {
            if let Some((t, sign)) = apply_hop(s, i, n - 1 - i) {
                entries.push((basis.index_of(t).unwrap(), col, C64::new(sign, 0.0)));
            }
        }
    }
    OperatorMatrix::from_triplets(basis.len(), entries)
}

/// One eigenvalue block of the hidden charge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct ChargeSpectrum {
    pub nu_even: usize,
    pub nu_odd: usize,
    pub degeneracy: usize,
}

impl ChargeSpectrum {
    pub fn eigenvalue(&self) -> f64 {
        -0.5 + self.nu_even as f64 - self.nu_odd as f64
    }
}

/// All `(ν_e, ν_o)` sectors with `ν_e + ν_o = n_particles`, ordered by
/// decreasing eigenvalue.
pub fn enumerate_charge_sectors(n_sites: usize, n_particles: usize) -> Vec<ChargeSpectrum> {
    let even = (n_sites + 1) / 2;
    let odd = n_sites / 2;
    (0..=n_particles.min(even))
        .rev()
        .filter(|&ne| n_particles - ne <= odd)
        .map(|ne| {
            let no = n_particles - ne;
            ChargeSpectrum { nu_even: ne, nu_odd: no, degeneracy: binomial(even, ne) * binomial(odd, no) }
        })
        .collect()
}

/// Eigenspace of the hidden charge in a Fock sector.
#[derive(Debug, Clone)]
pub struct ChargeSector {
    pub eigenvalue: f64,
    /// Orthonormal columns spanning the eigenspace.
    pub isometry: DMatrix<C64>,
}

impl ChargeSector {
    pub fn dim(&self) -> usize {
        self.isometry.ncols()
    }

    pub fn projector(&self) -> DMatrix<C64> {
        &self.isometry * self.isometry.adjoint()
    }

    /// `Tr[P ρ]`.
    pub fn weight(&self, rho: &DMatrix<C64>) -> f64 {
        (self.isometry.adjoint() * rho * &self.isometry).trace().re
    }
}

/// Diagonalizes the hidden charge and groups eigenvectors by eigenvalue,
/// ascending.
pub fn charge_sectors(basis: &ManyBodyBasis) -> Vec<ChargeSector> {
    let (vals, vecs) = hermitian_eigen(&charge_operator(basis).to_dense());
    let mut sectors: Vec<ChargeSector> = Vec::new();
    let mut start = 0;
    while start < vals.len() {
        let mut end = start + 1;
        while end < vals.len() && (vals[end] - vals[start]).abs() < 1e-6 {
            end += 1;
        }
        let mean = vals[start..end].iter().sum::<f64>() / (end - start) as f64;
        sectors.push(ChargeSector { eigenvalue: (mean * 2.0).round() / 2.0, isometry: vecs.columns(start, end - start).into_owned() });
        start = end;
    }
    sectors
}

/// Eigenvalue of the charge sector containing `psi`, if it lies in exactly one
/// sector to within `tol` in weight.
pub fn charge_of_state(sectors: &[ChargeSector], psi: &DVector<C64>, tol: f64) -> Option<f64> {
    let norm = psi.norm_squared();
    let mut found = None;
    for s in sectors {
        let w = (s.isometry.adjoint() * psi).norm_squared() / norm;
        if w > 1.0 - tol {
            found = Some(s.eigenvalue);
        } else if w > tol {
            return None;
        }
    }
    found
}

/// Normalized Slater determinant `b_{k1}^† b_{k2}^† … |0⟩` of the listed
/// single-particle modes (columns of `modes`).
pub fn slater_state(basis: &ManyBodyBasis, modes: &SingleParticleModes, mode_indices: &[usize]) -> Result<DVector<C64>> {
    let n = basis.n_sites();
    if modes.vectors.nrows() != n {
        return Err(Error::DimensionMismatch { expected: n, got: modes.vectors.nrows() });
    }
    if mode_indices.len() != basis.n_particles() {
        return Err(Error::DimensionMismatch { expected: basis.n_particles(), got: mode_indices.len() });
    }
    for (a, &k) in mode_indices.iter().enumerate() {
        if k >= modes.len() || mode_indices[..a].contains(&k) {
            return Err(Error::InvalidMode(k));
        }
    }
    let np = basis.n_particles();
    let mut psi = DVector::zeros(basis.len());
    for (idx, &s) in basis.states().iter().enumerate() {
        let sites: Vec<usize> = (0..n).filter(|&i| occupied(s, i)).collect();
        let m = DMatrix::from_fn(np, np, |a, b| C64::new(modes.vectors[(sites[b], mode_indices[a])], 0.0));
        psi[idx] = det(&m);
    }
    let norm = psi.norm();
    Ok(psi / C64::new(norm, 0.0))
}

pub fn fock_state(basis: &ManyBodyBasis, bitstring: &str) -> Result<DVector<C64>> {
    let bits = basis.parse_bitstring(bitstring)?;
    let mut psi = DVector::zeros(basis.len());
    psi[basis.index_of(bits).unwrap()] = ONE;
    Ok(psi)
}

/// Orthonormal basis of all Slater determinants built only from modes of the
/// given parity. For even parity this spans the `ν_o = 0` charge sector.
pub fn parity_slater_isometry(basis: &ManyBodyBasis, classes: &ParityClassification, parity: Parity) -> Result<DMatrix<C64>> {
    let pool = match parity {
        Parity::Even => &classes.even,
        Parity::Odd => &classes.odd,
    };
    let np = basis.n_particles();
    let mut columns = Vec::new();
    let mut current = Vec::new();
    let mut err = None;
    combinations(pool.len(), np, 0, &mut current, &mut |combo| {
        let modes: Vec<usize> = combo.iter().map(|&c| pool[c]).collect();
        match slater_state(basis, &classes.modes, &modes) {
            Ok(v) => columns.push(v),
            Err(e) => err = Some(e),
        }
    });
    if let Some(e) = err {
        return Err(e);
    }
    if columns.is_empty() {
        return Err(Error::ParticlesOutOfRange { sites: pool.len(), particles: np });
    }
    Ok(DMatrix::from_columns(&columns))
}
