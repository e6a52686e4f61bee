use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use airgrad_core::grid::{compute_station_weights, load_world};
use airgrad_core::health::curtailment_sweep;
use airgrad_core::model::load_bundle;
use airgrad_core::Result;
use clap::Args;

use crate::commands::util::{load_demography_input, write_artifact};
use crate::config::{load_config, parse_sector, require_path, HealthConfig};
use crate::manifest::Manifest;
use crate::Common;

#[derive(Args)]
pub struct ScenarioArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub world_dir: Option<PathBuf>,
    #[arg(long)]
    pub model_dir: Option<PathBuf>,
    /// Mortality table CSV (`age_group,mortality,share`).
    #[arg(long)]
    pub mortality: Option<PathBuf>,
    /// Emission sector to curtail.
    #[arg(long)]
    pub sector: Option<String>,
    /// Largest curtailment fraction.
    #[arg(long)]
    pub p_max: Option<f64>,
    /// Curtailment step.
    #[arg(long)]
    pub p_step: Option<f64>,
}

pub fn run(args: &ScenarioArgs) -> Result<()> {
    let cfg: HealthConfig = load_config(args.common.config.as_deref())?;
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
    let sector = parse_sector(args.sector.as_deref().unwrap_or(&cfg.sector))?;
    let p_max = args.p_max.unwrap_or(cfg.p_max);
    let p_step = args.p_step.unwrap_or(cfg.p_step);
    let fractions = cfg.fractions(p_max, p_step)?;
    let seed = args.common.seed.unwrap_or(cfg.seed);

    let mut manifest = Manifest::new("scenario-sweep", &args.common);
    if let Some(p) = &args.common.config {
        manifest.input_file(p)?;
    }
    manifest.input_dir(&world_dir)?;
    manifest.input_dir(&model_dir)?;
    let demography = load_demography_input(args.mortality.as_ref(), cfg.mortality.as_ref(), &mut manifest)?;

    let started = Instant::now();
    let world = load_world(&world_dir)?;
    let (mut model, _meta) = load_bundle(&model_dir)?;
    let weights = compute_station_weights(&world)?;
    manifest.timing("load", started);

    let started = Instant::now();
    let (baseline, rows) = curtailment_sweep(
        &mut model,
        &world,
        sector,
        &fractions,
        &demography,
        &cfg.gemm,
        &weights,
        cfg.draws,
        seed,
        cfg.ci,
    )?;
    manifest.timing("sweep", started);

    let mut csv = String::from(
        "fraction,weighted_pm25,avoided_deaths_mean,avoided_deaths_lo,avoided_deaths_hi\n",
    );
    for row in &rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            row.fraction,
            row.weighted_concentration,
            row.avoided.mean,
            row.avoided.lo,
            row.avoided.hi
        );
    }
    let out = &args.common.out_dir;
    write_artifact(out, "sweep.csv", &csv, &mut manifest)?;
    write_artifact(
        out,
        "baseline.csv",
        &format!("weighted_pm25\n{baseline}\n"),
        &mut manifest,
    )?;

    println!(
        "sector {} baseline {:.3} ug/m3; curtailment {:.0}%..{:.0}% -> avoided deaths {:.1}..{:.1}",
        sector.name(),
        baseline,
        fractions.first().unwrap() * 100.0,
        fractions.last().unwrap() * 100.0,
        rows.first().map(|r| r.avoided.mean).unwrap_or(0.0),
        rows.last().map(|r| r.avoided.mean).unwrap_or(0.0),
    );
    manifest.write(out)
}
