use thiserror::Error;

/// Errors produced by the model, solvers and experiment runner.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid lattice: {0}")]
    InvalidLattice(String),

    #[error("reflection symmetry broken (commutator norm {0:.3e}); parity classification unavailable")]
    ReflectionBroken(f64),

    #[error("particle number {particles} out of range for {sites} sites")]
    ParticlesOutOfRange { sites: usize, particles: usize },

    #[error("site index {index} out of range for {sites} sites")]
    SiteOutOfRange { index: usize, sites: usize },

    #[error("bitstring '{0}' is not a valid occupation string for this basis")]
    InvalidBitstring(String),

    #[error("repeated or out-of-range mode index {0}")]
    InvalidMode(usize),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("dephasing rate must be non-negative, got {0}")]
    NegativeRate(f64),

    #[error("invalid density matrix: {0}")]
    InvalidState(String),

    #[error("integrator step size underflow at t = {t} (h = {step:.3e})")]
    StepUnderflow { t: f64, step: f64 },

    #[error("invariant violated at t = {t}: {what} = {value:.3e}")]
    InvariantViolation { t: f64, what: &'static str, value: f64 },

    #[error("no steady state reached by t = {t}: Liouvillian residual {residual:.3e}")]
    NotConverged { t: f64, residual: f64 },

    #[error("null-space solver: {0}")]
    Solver(String),

    #[error("fastpath refused: {0}")]
    FastpathRefused(String),

    #[error("scaled correlation matrix has eigenvalue {0:.6} > 1; outside the even-mode validity domain")]
    ScalingBoundViolated(f64),

    #[error("invalid site pair ({0}, {1})")]
    InvalidPair(usize, usize),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
