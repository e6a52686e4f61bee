use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use airgrad_core::grid::{compute_station_weights, load_world, split_dataset};
use airgrad_core::train::{
    grid_search, prune_space, random_search, write_trial_log, Trial, TrialContext, TrialStatus,
};
use airgrad_core::{CoreError, Result};
use clap::Args;

use crate::commands::util::write_artifact;
use crate::config::{load_config, require_path, SearchConfig};
use crate::manifest::Manifest;
use crate::Common;

#[derive(Args)]
pub struct SearchArgs {
    #[command(flatten)]
    pub common: Common,
    /// World directory to search on.
    #[arg(long)]
    pub world_dir: Option<PathBuf>,
    /// Random trials override.
    #[arg(long)]
    pub trials: Option<usize>,
    /// Grid-search the pruned space after the random stage.
    #[arg(long)]
    pub then_grid: bool,
}

/// The best finite trial: smallest objective, ties to the earliest.
fn best_trial(trials: &[Trial]) -> Result<&Trial> {
    trials
        .iter()
        .filter(|t| matches!(t.status, TrialStatus::Ok) && t.objective.is_finite())
        .min_by(|a, b| {
            a.objective
                .partial_cmp(&b.objective)
                .expect("finite objectives compare")
                .then(a.index.cmp(&b.index))
        })
        .ok_or_else(|| CoreError::Invalid("every trial failed to train".into()))
}

pub fn run(args: &SearchArgs) -> Result<()> {
    let cfg: SearchConfig = load_config(args.common.config.as_deref())?;
    let world_dir = require_path(
        args.world_dir.as_ref(),
        cfg.world_dir.as_ref(),
        "world directory",
        "world-dir",
    )?;
    let master_seed = args.common.seed.unwrap_or(cfg.master_seed);
    let n_trials = args.trials.unwrap_or(cfg.trials);
    let then_grid = args.then_grid || cfg.then_grid;
    let prune_cfg = cfg.prune.to_prune_config()?;
    let mut manifest = Manifest::new("search", &args.common);
    if let Some(p) = &args.common.config {
        manifest.input_file(p)?;
    }
    manifest.input_dir(&world_dir)?;

    let started = Instant::now();
    let world = load_world(&world_dir)?;
    let weights = compute_station_weights(&world)?;
    let split = split_dataset(world.stations.len(), cfg.split_seed)?;
    let ctx = TrialContext {
        world: &world,
        split: &split,
        weights: &weights,
    };
    manifest.timing("load", started);

    let out = &args.common.out_dir;
    std::fs::create_dir_all(out).map_err(|e| CoreError::io(out, e))?;

    let started = Instant::now();
    let random_trials = random_search(&ctx, &cfg.space, n_trials, master_seed)?;
    write_trial_log(&out.join("random_trials.csv"), &random_trials)?;
    manifest.output("random_trials.csv");
    manifest.timing("random", started);

    let started = Instant::now();
    let report = prune_space(&cfg.space, &random_trials, &prune_cfg)?;
    let mut text = String::new();
    let _ = writeln!(
        text,
        "full space: {} combinations\npruned space: {} combinations",
        cfg.space.cardinality(),
        report.space.cardinality()
    );
    if report.dropped.is_empty() {
        let _ = writeln!(text, "no values dropped");
    }
    for d in &report.dropped {
        let _ = writeln!(text, "dropped {} = {}: {}", d.dimension, d.value, d.reason);
    }
    write_artifact(out, "prune_report.txt", &text, &mut manifest)?;
    manifest.timing("prune", started);

    let winner = if then_grid {
        let started = Instant::now();
        let (best_idx, grid_trials) = grid_search(&ctx, &report.space, master_seed)?;
        write_trial_log(&out.join("grid_trials.csv"), &grid_trials)?;
        manifest.output("grid_trials.csv");
        manifest.timing("grid", started);
        let best = &grid_trials[best_idx];
        println!(
            "grid winner: combination {} of {}, objective {}",
            best.index,
            grid_trials.len(),
            best.objective
        );
        best.hyper.clone()
    } else {
        let best = best_trial(&random_trials)?;
        println!(
            "random winner: trial {} of {}, objective {}",
            best.index,
            random_trials.len(),
            best.objective
        );
        best.hyper.clone()
    };

    let hyper_text = toml::to_string_pretty(&winner)
        .map_err(|e| CoreError::Invalid(format!("cannot serialize winner: {e}")))?;
    write_artifact(out, "best_hyper.toml", &hyper_text, &mut manifest)?;
    manifest.write(out)
}
