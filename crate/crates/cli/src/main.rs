//! Batch command-line workflows: world generation, training, hyperparameter
//! search, evaluation, and the health-damage analyses. Every subcommand
//! reads one TOML config plus flag overrides, writes its artifacts into a
//! run directory, and finishes with a run manifest. Outputs are
//! byte-identical for identical configs and seeds, regardless of worker
//! count; the manifest (which records wall-clock timings) is the one
//! deliberate exception.

mod commands;
mod config;
mod manifest;

use std::io::ErrorKind;
use std::path::PathBuf;
use std::process::ExitCode;

use airgrad_core::CoreError;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "airgrad",
    version,
    about = "Gridded energy-to-PM2.5 surrogate modelling and health damage accounting"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand.
#[derive(Args, Clone, Debug)]
pub struct Common {
    /// TOML configuration file; built-in defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Master seed override for the subcommand's stochastic stage.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads for parallel stages (default: all cores).
    #[arg(long)]
    pub workers: Option<usize>,
    /// Directory receiving all artifacts and the run manifest.
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic world with a known dispersion kernel.
    GenWorld(commands::gen_world::GenWorldArgs),
    /// Train a model on a world directory and save the bundle.
    Train(commands::train::TrainArgs),
    /// Random hyperparameter search, pruning, and optional grid refinement.
    Search(commands::search::SearchArgs),
    /// Report the five evaluation metrics on the train/val/test split.
    Evaluate(commands::evaluate::EvaluateArgs),
    /// Curtail one sector stepwise and tabulate avoided deaths.
    ScenarioSweep(commands::scenario::ScenarioArgs),
    /// Per-cell marginal damages of emission sectors, $ per tCO2.
    MdMap(commands::md_map::MdMapArgs),
    /// Total damages by sector with a regional breakdown.
    TotalDamage(commands::total_damage::TotalDamageArgs),
    /// Cumulative damage when gradients are restricted by distance.
    DistanceCurve(commands::distance::DistanceArgs),
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::GenWorld(a) => &a.common,
            Command::Train(a) => &a.common,
            Command::Search(a) => &a.common,
            Command::Evaluate(a) => &a.common,
            Command::ScenarioSweep(a) => &a.common,
            Command::MdMap(a) => &a.common,
            Command::TotalDamage(a) => &a.common,
            Command::DistanceCurve(a) => &a.common,
        }
    }

    fn run(&self) -> airgrad_core::Result<()> {
        match self {
            Command::GenWorld(a) => commands::gen_world::run(a),
            Command::Train(a) => commands::train::run(a),
            Command::Search(a) => commands::search::run(a),
            Command::Evaluate(a) => commands::evaluate::run(a),
            Command::ScenarioSweep(a) => commands::scenario::run(a),
            Command::MdMap(a) => commands::md_map::run(a),
            Command::TotalDamage(a) => commands::total_damage::run(a),
            Command::DistanceCurve(a) => commands::distance::run(a),
        }
    }
}

/// Maps error classes to distinct exit codes: 2 missing file, 3 config or
/// schema violation, 4 model shape failure, 1 anything else.
fn exit_code(err: &CoreError) -> u8 {
    match err {
        CoreError::Io { source, .. } if source.kind() == ErrorKind::NotFound => 2,
        CoreError::Schema { .. } | CoreError::Config(_) => 3,
        CoreError::Build { .. } => 4,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(workers) = cli.command.common().workers {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global();
        if let Err(e) = pool {
            eprintln!("error: cannot size the worker pool: {e}");
            return ExitCode::from(1);
        }
    }
    match cli.command.run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
