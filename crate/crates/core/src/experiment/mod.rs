//! Declarative experiment runner behind the command-line tool.
//!
//! A run produces in-memory tables and density snapshots plus a summary with
//! invariant checks; [`emit_plot_data`] writes them to disk.

mod config;
mod runs;

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

pub use config::{
    AutoKeyword, ExperimentConfig, ExperimentKind, InitialState, ModeParity, Observable, QuenchSpec, QuenchTime, ScanSpec, SizeScan,
    SolverMethod, SolverSpec, TimeGrid,
};

use crate::error::{Error, Result};
use crate::lindblad::DensitySnapshot;

/// Numeric table written as CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub headers: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(name: &str, headers: Vec<String>) -> Self {
        Self { name: name.to_string(), headers, rows: Vec::new() }
    }

    pub fn column(&self, header: &str) -> Option<Vec<f64>> {
        let k = self.headers.iter().position(|h| h == header)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl Check {
    /// Passes when `value <= tolerance`.
    pub fn at_most(name: &str, value: f64, tolerance: f64) -> Self {
        Self { name: name.into(), value, tolerance, passed: value <= tolerance }
    }

    /// Passes when `value >= tolerance`.
    pub fn at_least(name: &str, value: f64, tolerance: f64) -> Self {
        Self { name: name.into(), value, tolerance, passed: value >= tolerance }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub kind: ExperimentKind,
    pub config: ExperimentConfig,
    /// Conservation and validity checks; any failure makes the CLI exit
    /// nonzero.
    pub invariants: Vec<Check>,
    /// Physics expectations that are reported but do not fail the run.
    pub properties: Vec<Check>,
    pub results: Value,
    pub files: Vec<String>,
}

impl Summary {
    pub fn invariants_hold(&self) -> bool {
        self.invariants.iter().all(|c| c.passed)
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub summary: Summary,
    pub tables: Vec<Table>,
    pub snapshots: Vec<(String, DensitySnapshot)>,
}

impl RunOutput {
    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }
}

/// Executes one experiment.
pub fn run(config: &ExperimentConfig) -> Result<RunOutput> {
    config.validate()?;
    match config.kind {
        ExperimentKind::Evolve => runs::evolve(config),
        ExperimentKind::Steady => runs::steady(config),
        ExperimentKind::CorrelationMap => runs::correlation_map(config),
        ExperimentKind::ConcurrenceScan => runs::concurrence_scan(config),
        ExperimentKind::FockQuench => runs::fock_quench(config),
        ExperimentKind::RobustnessAa | ExperimentKind::RobustnessInt => runs::robustness(config),
    }
}

/// Writes every table as `<name>.csv`, every snapshot as `<name>.json` and
/// the summary as `summary.json`. Returns the written paths.
pub fn emit_plot_data(output: &RunOutput, dir: &Path) -> Result<Vec<PathBuf>> {
    if output.tables.is_empty() {
        return Err(Error::Config("run produced no tables to write".into()));
    }
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for table in &output.tables {
        let path = dir.join(format!("{}.csv", table.name));
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(&table.headers)?;
        for row in &table.rows {
            w.write_record(row.iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
        written.push(path);
    }
    for (name, snap) in &output.snapshots {
        let path = dir.join(format!("{name}.json"));
        fs::write(&path, serde_json::to_string_pretty(snap)?)?;
        written.push(path);
    }
    let mut summary = output.summary.clone();
    summary.files = written.iter().filter_map(|p| p.file_name()).map(|f| f.to_string_lossy().into_owned()).collect();
    summary.files.push("summary.json".into());
    let path = dir.join("summary.json");
    fs::write(&path, serde_json::to_string_pretty(&summary)?)?;
    written.push(path);
    Ok(written)
}

/// JSON schema of [`ExperimentConfig`].
pub fn config_schema() -> Value {
    serde_json::to_value(schemars::schema_for!(ExperimentConfig)).expect("schema serializes")
}
