use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::model::LatticeSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    /// Observable time series from an initial state.
    Evolve,
    /// Long-time state and its observables.
    Steady,
    /// Steady `⟨f_i^† f_j⟩` grid.
    CorrelationMap,
    /// Symmetric-pair concurrence over sizes and fillings.
    ConcurrenceScan,
    /// Evolution with a harmonic trap switched on mid-run.
    FockQuench,
    /// End-to-end concurrence against the quasi-periodic amplitude.
    RobustnessAa,
    /// End-to-end concurrence against the interaction strength.
    RobustnessInt,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 7] = [
        ExperimentKind::Evolve,
        ExperimentKind::Steady,
        ExperimentKind::CorrelationMap,
        ExperimentKind::ConcurrenceScan,
        ExperimentKind::FockQuench,
        ExperimentKind::RobustnessAa,
        ExperimentKind::RobustnessInt,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Evolve => "evolve",
            ExperimentKind::Steady => "steady",
            ExperimentKind::CorrelationMap => "correlation-map",
            ExperimentKind::ConcurrenceScan => "concurrence-scan",
            ExperimentKind::FockQuench => "fock-quench",
            ExperimentKind::RobustnessAa => "robustness-aa",
            ExperimentKind::RobustnessInt => "robustness-int",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "kebab-case")]
pub enum ModeParity {
    Even,
    Odd,
}

/// Initial pure state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialState {
    /// Occupation string, site 1 first, e.g. `"010"`.
    Fock { bitstring: String },
    /// Slater determinant of the listed modes (0-based, ascending energy).
    Slater { modes: Vec<usize> },
    /// Lowest `n_particles` modes.
    GroundState,
    /// Lowest `n_particles` modes of one reflection parity.
    ParityModes { parity: ModeParity },
}

/// Sample times; the evolution always starts at `t = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(untagged)]
pub enum TimeGrid {
    Explicit { times: Vec<f64> },
    /// `points` equally spaced samples on `[0, t_end]`.
    Uniform { t_end: f64, points: usize },
}

impl TimeGrid {
    pub fn times(&self) -> Vec<f64> {
        match self {
            TimeGrid::Explicit { times } => times.clone(),
            TimeGrid::Uniform { t_end, points } => {
                let n = (*points).max(2);
                (0..n).map(|k| t_end * k as f64 / (n - 1) as f64).collect()
            }
        }
    }
}

/// Measured quantity. Sites are 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Observable {
    /// `⟨n_site⟩`.
    Density { site: usize },
    /// `⟨f_i^† f_j⟩` as real part, imaginary part and modulus.
    Correlation { i: usize, j: usize },
    /// Wootters concurrence of the reduced pair state.
    Concurrence { i: usize, j: usize },
    /// Partial-transpose negativity of the reduced pair state.
    Negativity { i: usize, j: usize },
    /// `Tr[ρ Ĉ]` of the hidden charge.
    Charge,
    /// `Tr ρ²`.
    Purity,
    /// `‖𝓛 vec ρ‖∞` under the active generator.
    Residual,
}

impl Observable {
    pub fn columns(&self) -> Vec<String> {
        match self {
            Observable::Density { site } => vec![format!("n_{site}")],
            Observable::Correlation { i, j } => vec![format!("re_c_{i}_{j}"), format!("im_c_{i}_{j}"), format!("abs_c_{i}_{j}")],
            Observable::Concurrence { i, j } => vec![format!("conc_{i}_{j}")],
            Observable::Negativity { i, j } => vec![format!("neg_{i}_{j}")],
            Observable::Charge => vec!["charge".into()],
            Observable::Purity => vec!["purity".into()],
            Observable::Residual => vec!["residual".into()],
        }
    }

    fn check(&self, n_sites: usize, at: &str) -> Result<()> {
        let site_ok = |s: usize| (1..=n_sites).contains(&s);
        let bad = || Err(Error::Config(format!("{at}: site index out of 1..={n_sites}")));
        match *self {
            Observable::Density { site } if !site_ok(site) => bad(),
            Observable::Correlation { i, j } if !site_ok(i) || !site_ok(j) => bad(),
            Observable::Concurrence { i, j } | Observable::Negativity { i, j } => {
                if !site_ok(i) || !site_ok(j) {
                    bad()
                } else if i == j {
                    Err(Error::Config(format!("{at}: pair needs two distinct sites")))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }
}

/// Either a fixed instant or `"auto"`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(untagged)]
pub enum QuenchTime {
    At(f64),
    Keyword(AutoKeyword),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "lowercase")]
pub enum AutoKeyword {
    Auto,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct QuenchSpec {
    /// Quench instant, or `"auto"` for the first local maximum of the
    /// end-to-end `|⟨f_1^† f_N⟩|` after `transient`.
    pub time: QuenchTime,
    /// Trap strength V/J switched on at the quench.
    #[serde(default = "default_trap")]
    pub trap_amplitude: f64,
    /// Trap center on the 1-based site axis; the central site when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trap_center: Option<f64>,
    /// Start of the auto-detection window.
    #[serde(default = "default_transient")]
    pub transient: f64,
    /// Length of the post-quench averaging window.
    #[serde(default = "default_transient")]
    pub window: f64,
}

fn default_trap() -> f64 {
    2.0
}

fn default_transient() -> f64 {
    20.0
}

/// Perturbation amplitudes `min..=max` in `points` steps, each evolved to the
/// listed times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ScanSpec {
    #[serde(default)]
    pub min: f64,
    #[serde(default = "default_scan_max")]
    pub max: f64,
    #[serde(default = "default_scan_points")]
    pub points: usize,
    pub times: Vec<f64>,
}

fn default_scan_max() -> f64 {
    0.5
}

fn default_scan_points() -> usize {
    8
}

impl ScanSpec {
    pub fn amplitudes(&self) -> Vec<f64> {
        if self.points == 1 {
            return vec![self.min];
        }
        (0..self.points).map(|k| self.min + (self.max - self.min) * k as f64 / (self.points - 1) as f64).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct SizeScan {
    pub sizes: Vec<usize>,
    pub fillings: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "kebab-case")]
pub enum SolverMethod {
    /// Exact exponential for small sectors, adaptive integration otherwise.
    Auto,
    Adaptive,
    Exact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    #[serde(default = "default_method")]
    pub method: SolverMethod,
    #[serde(default = "default_rtol")]
    pub rtol: f64,
    #[serde(default = "default_atol")]
    pub atol: f64,
    /// Steady-state criterion on `‖𝓛 vec ρ‖∞`.
    #[serde(default = "default_steady_tol")]
    pub steady_tolerance: f64,
    /// Steady-state horizon; `10⁴/γ` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_max: Option<f64>,
    /// Evolve even-mode inputs inside their charge sector.
    #[serde(default = "default_true")]
    pub reduce_sector: bool,
}

fn default_method() -> SolverMethod {
    SolverMethod::Auto
}
fn default_rtol() -> f64 {
    1e-9
}
fn default_atol() -> f64 {
    1e-12
}
fn default_steady_tol() -> f64 {
    1e-9
}
fn default_true() -> bool {
    true
}

impl Default for SolverSpec {
    fn default() -> Self {
        Self {
            method: SolverMethod::Auto,
            rtol: 1e-9,
            atol: 1e-12,
            steady_tolerance: 1e-9,
            t_max: None,
            reduce_sector: true,
        }
    }
}

/// A complete experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub lattice: LatticeSpec,
    #[serde(default = "default_particles")]
    pub n_particles: usize,
    pub initial_state: InitialState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_grid: Option<TimeGrid>,
    #[serde(default)]
    pub observables: Vec<Observable>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quench: Option<QuenchSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scan: Option<ScanSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sizes: Option<SizeScan>,
    #[serde(default)]
    pub solver: SolverSpec,
}

fn default_particles() -> usize {
    1
}

fn central_fock(n: usize) -> String {
    (0..n).map(|i| if i == n / 2 { '1' } else { '0' }).collect()
}

impl ExperimentConfig {
    /// The configuration each subcommand runs when no file is given.
    pub fn default_for(kind: ExperimentKind) -> Self {
        let base = |n: usize, np: usize, init: InitialState| ExperimentConfig {
            kind,
            lattice: LatticeSpec::new(n),
            n_particles: np,
            initial_state: init,
            time_grid: None,
            observables: Vec::new(),
            quench: None,
            scan: None,
            sizes: None,
            solver: SolverSpec::default(),
        };
        let fock = |s: &str| InitialState::Fock { bitstring: s.to_string() };
        match kind {
            ExperimentKind::Evolve => ExperimentConfig {
                time_grid: Some(TimeGrid::Uniform { t_end: 50.0, points: 501 }),
                observables: vec![Observable::Correlation { i: 1, j: 9 }, Observable::Correlation { i: 1, j: 2 }],
                ..base(9, 1, InitialState::GroundState)
            },
            ExperimentKind::Steady => ExperimentConfig {
                observables: vec![
                    Observable::Density { site: 1 },
                    Observable::Density { site: 2 },
                    Observable::Density { site: 3 },
                    Observable::Correlation { i: 1, j: 3 },
                    Observable::Concurrence { i: 1, j: 3 },
                ],
                ..base(3, 1, fock("010"))
            },
            ExperimentKind::CorrelationMap => base(9, 1, fock(&central_fock(9))),
            ExperimentKind::ConcurrenceScan => ExperimentConfig {
                sizes: Some(SizeScan { sizes: vec![3, 5, 7, 9], fillings: vec![1, 2, 3] }),
                ..base(3, 1, InitialState::ParityModes { parity: ModeParity::Even })
            },
            ExperimentKind::FockQuench => ExperimentConfig {
                time_grid: Some(TimeGrid::Uniform { t_end: 60.0, points: 601 }),
                observables: vec![Observable::Correlation { i: 1, j: 7 }, Observable::Concurrence { i: 1, j: 7 }, Observable::Residual],
                quench: Some(QuenchSpec { time: QuenchTime::At(31.1), trap_amplitude: 2.0, trap_center: None, transient: 20.0, window: 20.0 }),
                ..base(7, 4, fock("1010101"))
            },
            ExperimentKind::RobustnessAa => ExperimentConfig {
                scan: Some(ScanSpec { min: 0.0, max: 0.5, points: 8, times: vec![100.0, 1000.0] }),
                ..base(9, 1, fock(&central_fock(9)))
            },
            ExperimentKind::RobustnessInt => ExperimentConfig {
                scan: Some(ScanSpec { min: 0.0, max: 0.5, points: 8, times: vec![31.1] }),
                ..base(7, 4, fock("1010101"))
            },
        }
    }

    /// Field-level validation.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        self.lattice.validate().map_err(|e| Error::Config(format!("lattice: {e}")))?;
        let n = self.lattice.n_sites;
        if self.kind != ExperimentKind::ConcurrenceScan && (self.n_particles == 0 || self.n_particles > n) {
            return bad(format!("n_particles: must lie in 1..={n}, got {}", self.n_particles));
        }
        match &self.initial_state {
            InitialState::Fock { bitstring } => {
                let ones = bitstring.chars().filter(|&c| c == '1').count();
                if ones != self.n_particles {
                    return bad(format!("initial_state.bitstring: {ones} occupied sites but n_particles = {}", self.n_particles));
                }
            }
            InitialState::Slater { modes } if modes.len() != self.n_particles => {
                return bad(format!("initial_state.modes: {} modes but n_particles = {}", modes.len(), self.n_particles));
            }
            _ => {}
        }
        if let Some(grid) = &self.time_grid {
            let times = grid.times();
            if let TimeGrid::Uniform { t_end, points } = grid {
                if !(*t_end > 0.0) || *points < 2 {
                    return bad("time_grid: uniform grid needs t_end > 0 and points >= 2".into());
                }
            }
            if times.is_empty() || times[0] < 0.0 || times.windows(2).any(|w| !(w[1] > w[0])) {
                return bad("time_grid.times: must be non-empty, non-negative and strictly increasing".into());
            }
        }
        for (k, obs) in self.observables.iter().enumerate() {
            obs.check(n, &format!("observables[{k}]"))?;
        }
        let s = &self.solver;
        if !(s.rtol > 0.0) || !(s.atol > 0.0) || !(s.steady_tolerance > 0.0) {
            return bad("solver: tolerances must be positive".into());
        }
        let require = |present: bool, field: &str| -> Result<()> {
            if present {
                Ok(())
            } else {
                Err(Error::Config(format!("{field}: required for kind {}", self.kind.name())))
            }
        };
        match self.kind {
            ExperimentKind::Evolve => require(self.time_grid.is_some(), "time_grid")?,
            ExperimentKind::FockQuench => {
                require(self.time_grid.is_some(), "time_grid")?;
                require(self.quench.is_some(), "quench")?;
                let q = self.quench.as_ref().unwrap();
                if let QuenchTime::At(t) = q.time {
                    if !(t > 0.0) {
                        return bad(format!("quench.time: must be positive, got {t}"));
                    }
                }
                if !(q.trap_amplitude >= 0.0) || !(q.window > 0.0) || !(q.transient >= 0.0) {
                    return bad("quench: trap_amplitude, transient must be non-negative and window positive".into());
                }
            }
            ExperimentKind::RobustnessAa | ExperimentKind::RobustnessInt => {
                require(self.scan.is_some(), "scan")?;
                let scan = self.scan.as_ref().unwrap();
                if scan.points == 0 || !(scan.min >= 0.0) || !(scan.max >= scan.min) {
                    return bad("scan: need points >= 1 and 0 <= min <= max".into());
                }
                if scan.times.is_empty() || scan.times[0] < 0.0 || scan.times.windows(2).any(|w| !(w[1] > w[0])) {
                    return bad("scan.times: must be non-empty, non-negative and strictly increasing".into());
                }
                if n < 3 {
                    return bad("lattice.n_sites: end-to-end concurrence needs at least 3 sites".into());
                }
            }
            ExperimentKind::ConcurrenceScan => {
                require(self.sizes.is_some(), "sizes")?;
                let sizes = self.sizes.as_ref().unwrap();
                if sizes.sizes.iter().any(|&s| s < 3 || s % 2 == 0 || s > 63) {
                    return bad("sizes.sizes: entries must be odd and between 3 and 63".into());
                }
                if sizes.fillings.contains(&0) {
                    return bad("sizes.fillings: entries must be positive".into());
                }
                if !matches!(self.initial_state, InitialState::ParityModes { .. }) {
                    return bad("initial_state: concurrence-scan needs a parity-modes state that fits every size".into());
                }
            }
            ExperimentKind::Steady | ExperimentKind::CorrelationMap => {}
        }
        Ok(())
    }

    /// Builds a config for `kind`: the kind's defaults, overlaid with `file`
    /// (if any), then with each `key=value` override. Keys are dotted paths
    /// such as `lattice.dephasing_gamma`; values parse as JSON and fall back
    /// to plain strings; a field that currently holds a string keeps the raw text.
    pub fn assemble(kind: ExperimentKind, file: Option<Value>, overrides: &[String]) -> Result<Self> {
        let mut value = serde_json::to_value(Self::default_for(kind))?;
        if let Some(user) = file {
            if let Some(k) = user.get("kind") {
                if k != &Value::String(kind.name().into()) {
                    return Err(Error::Config(format!("kind: config says {k}, subcommand is {}", kind.name())));
                }
            }
            merge(&mut value, user);
        }
        for item in overrides {
            let (key, raw) = item.split_once('=').ok_or_else(|| Error::Config(format!("override '{item}': expected key=value")))?;
            let pointer = format!("/{}", key.replace('.', "/"));
            let parsed = match serde_json::from_str::<Value>(raw) {
                // Bitstrings such as `100` stay strings.
                Ok(v) if !v.is_string() && value.pointer(&pointer).is_some_and(Value::is_string) => Value::String(raw.to_string()),
                Ok(v) => v,
                Err(_) => Value::String(raw.to_string()),
            };
            set_path(&mut value, key, parsed)?;
        }
        let config: ExperimentConfig = serde_json::from_value(value).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }
}

/// Fields holding one of several variants; a file replaces them whole.
const REPLACED_WHOLE: [&str; 2] = ["initial_state", "time_grid"];

/// Recursive object merge; non-object values in `patch` replace.
fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() && !REPLACED_WHOLE.contains(&k.as_str()) => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, p) => *slot = p,
    }
}

fn set_path(root: &mut Value, key: &str, value: Value) -> Result<()> {
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (depth, part) in parts.iter().enumerate() {
        let last = depth + 1 == parts.len();
        node = match node {
            Value::Object(map) => {
                if last {
                    map.insert(part.to_string(), value);
                    return Ok(());
                }
                map.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()))
            }
            Value::Array(items) => {
                let idx: usize = part.parse().map_err(|_| Error::Config(format!("override '{key}': '{part}' is not an index")))?;
                let len = items.len();
                let slot = items.get_mut(idx).ok_or_else(|| Error::Config(format!("override '{key}': index {idx} out of range ({len})")))?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            Value::Null => {
                *node = Value::Object(Default::default());
                let Value::Object(map) = node else { unreachable!() };
                if last {
                    map.insert(part.to_string(), value);
                    return Ok(());
                }
                map.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()))
            }
            _ => return Err(Error::Config(format!("override '{key}': '{part}' is not inside an object"))),
        };
    }
    Ok(())
}
