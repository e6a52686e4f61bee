use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use airgrad_core::grid::load_world;
use airgrad_core::health::{load_region_map, marginal_damage_field, total_damage, vsl, RegionMap};
use airgrad_core::model::load_bundle;
use airgrad_core::Result;
use clap::Args;

use crate::commands::util::{load_demography_input, write_artifact};
use crate::config::{load_config, parse_sectors, require_path, HealthConfig};
use crate::manifest::Manifest;
use crate::Common;

#[derive(Args)]
pub struct TotalDamageArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub world_dir: Option<PathBuf>,
    #[arg(long)]
    pub model_dir: Option<PathBuf>,
    /// Mortality table CSV (`age_group,mortality,share`).
    #[arg(long)]
    pub mortality: Option<PathBuf>,
    /// One emission sector, or `all`.
    #[arg(long)]
    pub sector: Option<String>,
    /// Region map CSV (`row,col,region`).
    #[arg(long)]
    pub regions: Option<PathBuf>,
}

pub fn run(args: &TotalDamageArgs) -> Result<()> {
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
    let sectors = parse_sectors(args.sector.as_deref().unwrap_or(&cfg.sector))?;
    let factors = cfg.factors()?;

    let mut manifest = Manifest::new("total-damage", &args.common);
    if let Some(p) = &args.common.config {
        manifest.input_file(p)?;
    }
    manifest.input_dir(&world_dir)?;
    manifest.input_dir(&model_dir)?;
    let demography = load_demography_input(args.mortality.as_ref(), cfg.mortality.as_ref(), &mut manifest)?;
    let regions: Option<RegionMap> = match args.regions.as_ref().or(cfg.regions.as_ref()) {
        Some(path) => {
            manifest.input_file(path)?;
            Some(load_region_map(path)?)
        }
        None => None,
    };

    let started = Instant::now();
    let world = load_world(&world_dir)?;
    let (mut model, _meta) = load_bundle(&model_dir)?;
    let vsl_usd = vsl(&cfg.vsl)?;
    manifest.timing("load", started);

    let started = Instant::now();
    let mut damages = String::from("sector,region,damage_usd\n");
    let mut totals = String::from("sector,total_usd,covered_cells,emitting_uncovered_cells\n");
    for sector in sectors {
        let field = marginal_damage_field(
            &mut model,
            &world,
            sector,
            &demography,
            &cfg.gemm,
            vsl_usd,
            factors,
            cfg.clamp_negative,
        )?;
        let summary = total_damage(&field, &world, regions.as_ref())?;
        for (region, usd) in &summary.by_region {
            let _ = writeln!(damages, "{},{region},{usd}", sector.name());
        }
        let _ = writeln!(
            totals,
            "{},{},{},{}",
            sector.name(),
            summary.total,
            summary.covered_cells,
            summary.emitting_uncovered_cells
        );
        println!(
            "sector {}: total {:.3e} USD/yr over {} covered cells ({} emitting cells unseen)",
            sector.name(),
            summary.total,
            summary.covered_cells,
            summary.emitting_uncovered_cells
        );
    }
    manifest.timing("damages", started);

    let out = &args.common.out_dir;
    write_artifact(out, "damages_by_region.csv", &damages, &mut manifest)?;
    write_artifact(out, "damage_totals.csv", &totals, &mut manifest)?;
    manifest.write(out)
}
