//! Lindblad dynamics of a spinless-fermion chain dephased on its central site.
//!
//! The crate builds the lattice model, its fixed-particle-number Fock sectors
//! and symmetry operators, evolves density matrices under the master
//! equation, and measures the entanglement of mirror-symmetric site pairs.

pub mod entangle;
pub mod error;
pub mod experiment;
pub mod fastpath;
pub mod fock;
pub mod lindblad;
pub mod linalg;
pub mod model;
pub mod oracle;

pub use error::{Error, Result};
pub use fock::{ManyBodyBasis, OperatorMatrix};
pub use lindblad::{DensityMatrix, Liouvillian};
pub use model::LatticeSpec;
