use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use airgrad_core::grid::load_world;
use airgrad_core::health::{damage_by_distance, vsl};
use airgrad_core::model::load_bundle;
use airgrad_core::{CoreError, Result};
use clap::Args;

use crate::commands::util::{load_demography_input, write_artifact};
use crate::config::{load_config, parse_sector, require_path, HealthConfig};
use crate::manifest::Manifest;
use crate::Common;

#[derive(Args)]
pub struct DistanceArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub world_dir: Option<PathBuf>,
    #[arg(long)]
    pub model_dir: Option<PathBuf>,
    /// Mortality table CSV (`age_group,mortality,share`).
    #[arg(long)]
    pub mortality: Option<PathBuf>,
    /// Emission sector for the curve.
    #[arg(long)]
    pub sector: Option<String>,
    /// Comma-separated odd edge lengths in cells, e.g. `1,5,9,13`.
    #[arg(long)]
    pub edges: Option<String>,
}

fn parse_edges(text: &str) -> Result<Vec<usize>> {
    text.split(',')
        .map(|part| {
            part.trim()
                .parse::<usize>()
                .map_err(|e| CoreError::Config(format!("bad edge length '{part}': {e}")))
        })
        .collect()
}

pub fn run(args: &DistanceArgs) -> Result<()> {
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
    let sector_name = args.sector.as_deref().unwrap_or(&cfg.sector);
    if sector_name.eq_ignore_ascii_case("all") {
        return Err(CoreError::Config(
            "distance-curve needs a single emission sector, not 'all'".into(),
        ));
    }
    let sector = parse_sector(sector_name)?;
    let factors = cfg.factors()?;

    let mut manifest = Manifest::new("distance-curve", &args.common);
    if let Some(p) = &args.common.config {
        manifest.input_file(p)?;
    }
    manifest.input_dir(&world_dir)?;
    manifest.input_dir(&model_dir)?;
    let demography = load_demography_input(args.mortality.as_ref(), cfg.mortality.as_ref(), &mut manifest)?;

    let started = Instant::now();
    let world = load_world(&world_dir)?;
    let (mut model, _meta) = load_bundle(&model_dir)?;
    let vsl_usd = vsl(&cfg.vsl)?;
    manifest.timing("load", started);

    let edges: Vec<usize> = match args.edges.as_deref() {
        Some(text) => parse_edges(text)?,
        None if !cfg.edges.is_empty() => cfg.edges.clone(),
        // Default ladder: every odd edge up to the full model window.
        None => (0..=model.hyper.half_extent).map(|h| 2 * h + 1).collect(),
    };

    let started = Instant::now();
    let curve = damage_by_distance(
        &mut model,
        &world,
        sector,
        &edges,
        &demography,
        &cfg.gemm,
        vsl_usd,
        factors,
    )?;
    manifest.timing("curve", started);

    let widest = curve.last().map(|(_, usd)| *usd).unwrap_or(0.0);
    let mut csv = String::from("edge_cells,edge_km,damage_usd,fraction_of_widest\n");
    for (edge, usd) in &curve {
        let fraction = if widest != 0.0 { usd / widest } else { 0.0 };
        let _ = writeln!(
            csv,
            "{edge},{},{usd},{fraction}",
            *edge as f64 * world.cell_km
        );
    }
    let name = format!("distance_{}.csv", sector.name().to_lowercase());
    write_artifact(&args.common.out_dir, &name, &csv, &mut manifest)?;

    println!(
        "sector {}: damage at widest edge {} = {:.3e} USD/yr",
        sector.name(),
        curve.last().map(|(e, _)| *e).unwrap_or(0),
        widest
    );
    manifest.write(&args.common.out_dir)
}
