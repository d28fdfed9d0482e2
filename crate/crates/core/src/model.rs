//! Lattice description and the single-particle Hamiltonian.
//!
//! Site coordinates inside the potential terms run over `i = 1..=N`, so the
//! quasi-periodic term is `V_AA cos(2π ω i / N)` and the trap is
//! `V (i - i_c)^2` with `i_c` measured on the same 1-based axis. Matrix
//! indices are zero-based everywhere else.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Inverse golden ratio, the default quasi-periodic frequency.
pub const GOLDEN_FREQUENCY: f64 = 0.618_033_988_749_894_9;

/// Physical parameters of the dephased chain. `hbar` is fixed to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct LatticeSpec {
    /// Number of sites N (odd).
    pub n_sites: usize,
    /// Hopping amplitude J.
    #[serde(default = "one")]
    pub tunneling: f64,
    /// Dephasing rate γ on the central site.
    #[serde(default = "one")]
    pub dephasing_gamma: f64,
    /// Aubry–André amplitude V_AA.
    #[serde(default)]
    pub aa_amplitude: f64,
    /// Aubry–André frequency ω; the inverse golden ratio when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aa_frequency: Option<f64>,
    /// Harmonic trap strength V.
    #[serde(default)]
    pub trap_amplitude: f64,
    /// Trap center i_c on the 1-based site axis; the central site when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trap_center: Option<f64>,
    /// Nearest-neighbour density-density interaction V_int.
    #[serde(default)]
    pub interaction: f64,
}

fn one() -> f64 {
    1.0
}

impl LatticeSpec {
    /// Bare chain with unit hopping and unit dephasing.
    pub fn new(n_sites: usize) -> Self {
        Self {
            n_sites,
            tunneling: 1.0,
            dephasing_gamma: 1.0,
            aa_amplitude: 0.0,
            aa_frequency: None,
            trap_amplitude: 0.0,
            trap_center: None,
            interaction: 0.0,
        }
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.dephasing_gamma = gamma;
        self
    }

    pub fn with_aa(mut self, amplitude: f64) -> Self {
        self.aa_amplitude = amplitude;
        self
    }

    pub fn with_trap(mut self, amplitude: f64) -> Self {
        self.trap_amplitude = amplitude;
        self
    }

    pub fn with_interaction(mut self, strength: f64) -> Self {
        self.interaction = strength;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidLattice(msg));
        if self.n_sites == 0 || self.n_sites % 2 == 0 {
            return bad(format!("n_sites must be odd and positive, got {}", self.n_sites));
        }
        if self.n_sites > 63 {
            return bad(format!("n_sites {} exceeds the 63-site bitstring limit", self.n_sites));
        }
        if !(self.tunneling > 0.0) || !self.tunneling.is_finite() {
            return bad(format!("tunneling must be positive, got {}", self.tunneling));
        }
        for (name, v) in [
            ("dephasing_gamma", self.dephasing_gamma),
            ("aa_amplitude", self.aa_amplitude),
            ("trap_amplitude", self.trap_amplitude),
            ("interaction", self.interaction),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return bad(format!("{name} must be non-negative, got {v}"));
            }
        }
        if let Some(w) = self.aa_frequency {
            if !w.is_finite() {
                return bad("aa_frequency must be finite".into());
            }
        }
        if let Some(c) = self.trap_center {
            if !c.is_finite() {
                return bad("trap_center must be finite".into());
            }
        }
        Ok(())
    }

    /// Zero-based index of the dephased site.
    pub fn central_site(&self) -> usize {
        (self.n_sites - 1) / 2
    }

    pub fn aa_frequency(&self) -> f64 {
        self.aa_frequency.unwrap_or(GOLDEN_FREQUENCY)
    }

    /// Trap center on the 1-based axis.
    pub fn trap_center(&self) -> f64 {
        self.trap_center.unwrap_or((self.n_sites as f64 + 1.0) / 2.0)
    }
}

/// Real symmetric single-particle Hamiltonian: hopping `-J` on every bond plus
/// the on-site quasi-periodic potential and, if requested, the trap. The
/// interaction is many-body and never appears here.
pub fn build_single_particle_hamiltonian(spec: &LatticeSpec, include_trap: bool) -> Result<DMatrix<f64>> {
    spec.validate()?;
    let n = spec.n_sites;
    let mut h = DMatrix::zeros(n, n);
    for i in 0..n.saturating_sub(1) {
        h[(i, i + 1)] = -spec.tunneling;
        h[(i + 1, i)] = -spec.tunneling;
    }
    let omega = spec.aa_frequency();
    let center = spec.trap_center();
    for i in 0..n {
        let x = (i + 1) as f64;
        let mut onsite = 0.0;
        if spec.aa_amplitude != 0.0 {
            onsite += spec.aa_amplitude * (2.0 * std::f64::consts::PI * omega * x / n as f64).cos();
        }
        if include_trap {
            onsite += spec.trap_amplitude * (x - center).powi(2);
        }
        h[(i, i)] = onsite;
    }
    Ok(h)
}

/// Site-reversal permutation `i -> N-1-i`.
pub fn reflection_matrix(n_sites: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n_sites, n_sites, |i, j| if i + j + 1 == n_sites { 1.0 } else { 0.0 })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Parity {
    Even,
    Odd,
}

/// Eigenmodes of a single-particle Hamiltonian, ascending in energy.
/// Column `k` of `vectors` is mode `k`.
#[derive(Debug, Clone)]
pub struct SingleParticleModes {
    pub energies: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

impl SingleParticleModes {
    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }

    pub fn mode(&self, k: usize) -> DVector<f64> {
        self.vectors.column(k).into_owned()
    }
}

/// Diagonalizes `h`, sorts by energy and fixes each vector's sign so that its
/// first component above 1e-12 in magnitude is positive.
pub fn eigenmodes(h: &DMatrix<f64>) -> SingleParticleModes {
    let eig = SymmetricEigen::new(h.clone());
    let n = h.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let mut vectors = DMatrix::zeros(n, n);
    let mut energies = Vec::with_capacity(n);
    for (k, &src) in order.iter().enumerate() {
        let mut v = eig.eigenvectors.column(src).into_owned();
        fix_sign(&mut v);
        vectors.set_column(k, &v);
        energies.push(eig.eigenvalues[src]);
    }
    SingleParticleModes { energies, vectors }
}

fn fix_sign(v: &mut DVector<f64>) {
    if let Some(first) = v.iter().find(|x| x.abs() > 1e-12) {
        if *first < 0.0 {
            v.neg_mut();
        }
    }
}

/// Eigenmodes split by reflection parity.
#[derive(Debug, Clone)]
pub struct ParityClassification {
    /// Parity-resolved eigenmodes; within a degenerate cluster the vectors are
    /// rotated onto reflection eigenvectors.
    pub modes: SingleParticleModes,
    pub parities: Vec<Parity>,
    pub even: Vec<usize>,
    pub odd: Vec<usize>,
}

const DEGENERACY_TOL: f64 = 1e-9;

/// Classifies the eigenmodes of `h` as even or odd under `reflection`.
///
/// Fails with [`Error::ReflectionBroken`] when `h` does not commute with the
/// reflection, e.g. for a non-zero quasi-periodic potential.
pub fn classify_mode_parity(h: &DMatrix<f64>, reflection: &DMatrix<f64>) -> Result<ParityClassification> {
    let n = h.nrows();
    if reflection.nrows() != n || reflection.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, got: reflection.nrows() });
    }
    let comm = (h * reflection - reflection * h).norm();
    if comm > 1e-10 * h.norm().max(1.0) {
        return Err(Error::ReflectionBroken(comm));
    }

    let mut modes = eigenmodes(h);
    let mut parities = vec![Parity::Even; n];
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && (modes.energies[end] - modes.energies[start]).abs() < DEGENERACY_TOL {
            end += 1;
        }
        let block = modes.vectors.columns(start, end - start).into_owned();
        // Reflection restricted to the degenerate eigenspace; its eigenvectors
        // are the parity-resolved modes.
        let restricted = block.transpose() * reflection * &block;
        let sym = (&restricted + restricted.transpose()) * 0.5;
        let eig = SymmetricEigen::new(sym);
        let mut idx: Vec<usize> = (0..end - start).collect();
        // Even modes first inside a cluster.
        idx.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        for (offset, &k) in idx.iter().enumerate() {
            let mut v = &block * eig.eigenvectors.column(k);
            v /= v.norm();
            fix_sign(&mut v);
            modes.vectors.set_column(start + offset, &v);
            parities[start + offset] = if eig.eigenvalues[k] > 0.0 { Parity::Even } else { Parity::Odd };
        }
        start = end;
    }

    let even = (0..n).filter(|&k| parities[k] == Parity::Even).collect();
    let odd = (0..n).filter(|&k| parities[k] == Parity::Odd).collect();
    Ok(ParityClassification { modes, parities, even, odd })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn n3_bare_chain() {
        let h = build_single_particle_hamiltonian(&LatticeSpec::new(3), false).unwrap();
        let expected = DMatrix::from_row_slice(3, 3, &[0.0, -1.0, 0.0, -1.0, 0.0, -1.0, 0.0, -1.0, 0.0]);
        assert_eq!(h, expected);
        let modes = eigenmodes(&h);
        let s2 = 2f64.sqrt();
        for (e, want) in modes.energies.iter().zip([-s2, 0.0, s2]) {
            assert_abs_diff_eq!(*e, want, epsilon = 1e-12);
        }
    }

    #[test]
    fn single_site_is_zero() {
        let h = build_single_particle_hamiltonian(&LatticeSpec::new(1), false).unwrap();
        assert_eq!(h, DMatrix::zeros(1, 1));
        let p = classify_mode_parity(&h, &reflection_matrix(1)).unwrap();
        assert_eq!(p.even, vec![0]);
        assert!(p.odd.is_empty());
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(build_single_particle_hamiltonian(&LatticeSpec::new(4), false).is_err());
        assert!(build_single_particle_hamiltonian(&LatticeSpec::new(0), false).is_err());
        assert!(build_single_particle_hamiltonian(&LatticeSpec::new(5).with_aa(-0.1), false).is_err());
        assert!(build_single_particle_hamiltonian(&LatticeSpec::new(5).with_gamma(-1.0), false).is_err());
        let mut s = LatticeSpec::new(5);
        s.tunneling = 0.0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn bare_spectrum_matches_cosine_band() {
        for n in (1..=15).step_by(2) {
            let h = build_single_particle_hamiltonian(&LatticeSpec::new(n), false).unwrap();
            let modes = eigenmodes(&h);
            let mut want: Vec<f64> = (1..=n)
                .map(|k| -2.0 * (k as f64 * std::f64::consts::PI / (n as f64 + 1.0)).cos())
                .collect();
            want.sort_by(f64::total_cmp);
            for (e, w) in modes.energies.iter().zip(&want) {
                assert!((e - w).abs() < 1e-12, "N={n}: {e} vs {w}");
            }
        }
    }

    #[test]
    fn parity_counts_and_nodes() {
        for n in (1..=15).step_by(2) {
            let h = build_single_particle_hamiltonian(&LatticeSpec::new(n), false).unwrap();
            let r = reflection_matrix(n);
            assert_eq!((&h * &r - &r * &h).norm(), 0.0);
            let p = classify_mode_parity(&h, &r).unwrap();
            assert_eq!(p.even.len(), (n + 1) / 2);
            assert_eq!(p.odd.len(), (n - 1) / 2);
            let c = (n - 1) / 2;
            for &k in &p.odd {
                assert!(p.modes.vectors[(c, k)].abs() < 1e-12);
            }
            for k in 0..n {
                let v = p.modes.mode(k);
                let sign = if p.parities[k] == Parity::Even { 1.0 } else { -1.0 };
                assert!((&r * &v - &v * sign).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn n3_odd_mode() {
        let h = build_single_particle_hamiltonian(&LatticeSpec::new(3), false).unwrap();
        let p = classify_mode_parity(&h, &reflection_matrix(3)).unwrap();
        assert_eq!(p.even.len(), 2);
        assert_eq!(p.odd, vec![1]);
        let v = p.modes.mode(1);
        let s = 0.5f64.sqrt();
        assert_abs_diff_eq!(v[0], s, epsilon = 1e-12);
        assert_abs_diff_eq!(v[1], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(v[2], -s, epsilon = 1e-12);
    }

    #[test]
    fn quasi_periodic_potential_breaks_reflection() {
        let spec = LatticeSpec::new(9).with_aa(0.3);
        let h = build_single_particle_hamiltonian(&spec, false).unwrap();
        assert!(matches!(classify_mode_parity(&h, &reflection_matrix(9)), Err(Error::ReflectionBroken(_))));
        let x = 4.0;
        let want = 0.3 * (2.0 * std::f64::consts::PI * GOLDEN_FREQUENCY * x / 9.0).cos();
        assert_abs_diff_eq!(h[(3, 3)], want, epsilon = 1e-15);
    }

    #[test]
    fn trap_is_symmetric_and_degeneracies_resolve() {
        let spec = LatticeSpec::new(7).with_trap(2.0);
        let h = build_single_particle_hamiltonian(&spec, true).unwrap();
        assert_eq!(h[(0, 0)], 18.0);
        assert_eq!(h[(3, 3)], 0.0);
        let h_off = build_single_particle_hamiltonian(&spec, false).unwrap();
        assert_eq!(h_off[(0, 0)], 0.0);

        // Two decoupled copies of a symmetric dimer produce exact degeneracies.
        let mut h = DMatrix::zeros(5, 5);
        h[(0, 1)] = -1.0;
        h[(1, 0)] = -1.0;
        h[(3, 4)] = -1.0;
        h[(4, 3)] = -1.0;
        let r = reflection_matrix(5);
        let p = classify_mode_parity(&h, &r).unwrap();
        assert_eq!(p.even.len(), 3);
        assert_eq!(p.odd.len(), 2);
        for k in 0..5 {
            let v = p.modes.mode(k);
            let sign = if p.parities[k] == Parity::Even { 1.0 } else { -1.0 };
            assert!((&r * &v - &v * sign).norm() < 1e-12);
        }
    }
}
