use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use airgrad_core::grid::load_world;
use airgrad_core::health::{marginal_damage_field, vsl};
use airgrad_core::model::load_bundle;
use airgrad_core::Result;
use clap::Args;

use crate::commands::util::{load_demography_input, write_artifact};
use crate::config::{load_config, parse_sectors, require_path, HealthConfig};
use crate::manifest::Manifest;
use crate::Common;

#[derive(Args)]
pub struct MdMapArgs {
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
}

pub fn run(args: &MdMapArgs) -> Result<()> {
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

    let mut manifest = Manifest::new("md-map", &args.common);
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

    let out = &args.common.out_dir;
    let mut summary = String::from("sector,covered_cells,negative_cells,clamped\n");
    for sector in sectors {
        let started = Instant::now();
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
        let mut csv = String::from("row,col,sector,md_usd_per_tco2\n");
        for r in 0..field.rows {
            for c in 0..field.cols {
                if field.covered_at(r, c) {
                    let _ = writeln!(csv, "{r},{c},{},{}", sector.name(), field.md_at(r, c));
                }
            }
        }
        let name = format!("md_{}.csv", sector.name().to_lowercase());
        write_artifact(out, &name, &csv, &mut manifest)?;
        let _ = writeln!(
            summary,
            "{},{},{},{}",
            sector.name(),
            field.covered_cells(),
            field.negative_cells,
            field.clamped
        );
        manifest.timing(&format!("field_{}", sector.name()), started);
        println!(
            "sector {}: {} covered cells, {} negative before clamping",
            sector.name(),
            field.covered_cells(),
            field.negative_cells
        );
    }
    write_artifact(out, "md_summary.csv", &summary, &mut manifest)?;
    manifest.write(out)
}
