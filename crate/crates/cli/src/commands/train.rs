use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use airgrad_core::grid::{compute_station_weights, load_world, split_dataset};
use airgrad_core::model::{build_model, save_bundle};
use airgrad_core::train::{build_samples, train_model};
use airgrad_core::Result;
use clap::Args;

use crate::commands::util::{metrics_csv, print_metrics, split_metrics, write_artifact};
use crate::config::{load_config, require_path, TrainConfig};
use crate::manifest::Manifest;
use crate::Common;

#[derive(Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    /// World directory to train on.
    #[arg(long)]
    pub world_dir: Option<PathBuf>,
}

pub fn run(args: &TrainArgs) -> Result<()> {
    let cfg: TrainConfig = load_config(args.common.config.as_deref())?;
    let world_dir = require_path(
        args.world_dir.as_ref(),
        cfg.world_dir.as_ref(),
        "world directory",
        "world-dir",
    )?;
    let train_seed = args.common.seed.unwrap_or(cfg.train_seed);
    let mut manifest = Manifest::new("train", &args.common);
    if let Some(p) = &args.common.config {
        manifest.input_file(p)?;
    }
    manifest.input_dir(&world_dir)?;

    let started = Instant::now();
    let world = load_world(&world_dir)?;
    let weights = compute_station_weights(&world)?;
    let samples = build_samples(&world, cfg.hyper.half_extent)?;
    let split = split_dataset(world.stations.len(), cfg.split_seed)?;
    manifest.timing("load", started);

    let started = Instant::now();
    let mut model = build_model(&cfg.hyper, train_seed)?;
    let report = train_model(&mut model, &samples, &split.train, &weights, train_seed)?;
    manifest.timing("train", started);

    let started = Instant::now();
    let out = &args.common.out_dir;
    std::fs::create_dir_all(out).map_err(|e| airgrad_core::CoreError::io(out, e))?;
    save_bundle(&out.join("model"), &model, cfg.split_seed, train_seed)?;
    manifest.output("model/model.toml");
    manifest.output("model/model.bin");

    let mut history = String::from("epoch,weighted_mse\n");
    for (epoch, loss) in report.epoch_losses.iter().enumerate() {
        let _ = writeln!(history, "{epoch},{loss}");
    }
    write_artifact(out, "history.csv", &history, &mut manifest)?;

    let rows = split_metrics(&mut model, &samples, &split, &weights)?;
    write_artifact(out, "metrics.csv", &metrics_csv(&rows), &mut manifest)?;
    manifest.timing("report", started);

    print_metrics(&rows);
    manifest.write(out)
}
