use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dephasing::experiment::{config_schema, emit_plot_data, run, ExperimentConfig, ExperimentKind};
use dephasing::Result;

#[derive(Parser)]
#[command(name = "dephasing", version, about = "Central-site dephasing experiments on a fermionic chain")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// JSON config; omitted fields take the subcommand defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for CSV tables and summary.json.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Dotted-path override such as `lattice.n_sites=7` (repeatable).
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Time series of observables.
    Evolve(RunArgs),
    /// Steady state and its observables.
    Steady(RunArgs),
    /// Steady correlation matrix.
    CorrelationMap(RunArgs),
    /// Symmetric-pair concurrence over sizes and fillings.
    ConcurrenceScan(RunArgs),
    /// Trap quench during evolution.
    FockQuench(RunArgs),
    /// Concurrence against the quasi-periodic amplitude.
    RobustnessAa(RunArgs),
    /// Concurrence against the interaction strength.
    RobustnessInt(RunArgs),
    /// Print the config JSON schema, or write it to a file.
    Schema {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the default config of a subcommand.
    Defaults { kind: String },
}

fn load(path: Option<&Path>) -> Result<Option<serde_json::Value>> {
    path.map(|p| Ok(serde_json::from_str(&std::fs::read_to_string(p)?)?)).transpose()
}

fn execute(kind: ExperimentKind, args: &RunArgs) -> Result<bool> {
    let config = ExperimentConfig::assemble(kind, load(args.config.as_deref())?, &args.overrides)?;
    let output = run(&config)?;
    let files = emit_plot_data(&output, &args.out)?;
    for c in output.summary.invariants.iter().filter(|c| !c.passed) {
        eprintln!("invariant violated: {} = {:e} (tolerance {:e})", c.name, c.value, c.tolerance);
    }
    for c in output.summary.properties.iter().filter(|c| !c.passed) {
        eprintln!("note: {} = {:e} (threshold {:e})", c.name, c.value, c.tolerance);
    }
    for f in files {
        println!("{}", f.display());
    }
    Ok(output.summary.invariants_hold())
}

fn dispatch(cli: Cli) -> Result<bool> {
    let (kind, args) = match &cli.command {
        Command::Evolve(a) => (ExperimentKind::Evolve, a),
        Command::Steady(a) => (ExperimentKind::Steady, a),
        Command::CorrelationMap(a) => (ExperimentKind::CorrelationMap, a),
        Command::ConcurrenceScan(a) => (ExperimentKind::ConcurrenceScan, a),
        Command::FockQuench(a) => (ExperimentKind::FockQuench, a),
        Command::RobustnessAa(a) => (ExperimentKind::RobustnessAa, a),
        Command::RobustnessInt(a) => (ExperimentKind::RobustnessInt, a),
        Command::Schema { out } => {
            let text = serde_json::to_string_pretty(&config_schema())?;
            match out {
                Some(p) => std::fs::write(p, text + "\n")?,
                None => println!("{text}"),
            }
            return Ok(true);
        }
        Command::Defaults { kind } => {
            let kind = ExperimentKind::ALL
                .into_iter()
                .find(|k| k.name() == kind)
                .ok_or_else(|| dephasing::Error::Config(format!("unknown experiment kind {kind:?}")))?;
            println!("{}", serde_json::to_string_pretty(&ExperimentConfig::default_for(kind))?);
            return Ok(true);
        }
    };
    execute(kind, args)
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
