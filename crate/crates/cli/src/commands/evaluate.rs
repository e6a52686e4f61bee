use std::path::PathBuf;
use std::time::Instant;

use airgrad_core::grid::{compute_station_weights, load_world, split_dataset};
use airgrad_core::model::load_bundle;
use airgrad_core::train::build_samples;
use airgrad_core::Result;
use clap::Args;

use crate::commands::util::{metrics_csv, print_metrics, split_metrics, write_artifact};
use crate::config::{load_config, require_path, EvaluateConfig};
use crate::manifest::Manifest;
use crate::Common;

#[derive(Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub common: Common,
    /// World directory holding the observations.
    #[arg(long)]
    pub world_dir: Option<PathBuf>,
    /// Trained model bundle directory.
    #[arg(long)]
    pub model_dir: Option<PathBuf>,
}

pub fn run(args: &EvaluateArgs) -> Result<()> {
    let cfg: EvaluateConfig = load_config(args.common.config.as_deref())?;
    let world_dir = require_path(
        args.world_dir.as_ref(),
        cfg.world_dir.as_ref(),
        "world directory",
        "world-dir",
    )?;
    let model_dir = require_path(
        args.model_dir.as_ref(),
        cfg.model_dir.as_ref(),
        "model bundle directory",
        "model-dir",
    )?;
    let mut manifest = Manifest::new("evaluate", &args.common);
    if let Some(p) = &args.common.config {
        manifest.input_file(p)?;
    }
    manifest.input_dir(&world_dir)?;
    manifest.input_dir(&model_dir)?;

    let started = Instant::now();
    let world = load_world(&world_dir)?;
    let (mut model, meta) = load_bundle(&model_dir)?;
    let weights = compute_station_weights(&world)?;
    let samples = build_samples(&world, model.hyper.half_extent)?;
    let split_seed = cfg.split_seed.unwrap_or(meta.split_seed);
    let split = split_dataset(world.stations.len(), split_seed)?;
    manifest.timing("load", started);

    let started = Instant::now();
    let rows = split_metrics(&mut model, &samples, &split, &weights)?;
    write_artifact(
        &args.common.out_dir,
        "metrics.csv",
        &metrics_csv(&rows),
        &mut manifest,
    )?;
    manifest.timing("evaluate", started);

    print_metrics(&rows);
    manifest.write(&args.common.out_dir)
}
