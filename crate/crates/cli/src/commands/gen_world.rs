use std::fmt::Write as _;
use std::time::Instant;

use airgrad_core::grid::{save_world, ChannelId};
use airgrad_core::synth::{generate_region_map, generate_world, save_kernel, KERNEL_FILE};
use airgrad_core::Result;
use clap::Args;

use crate::commands::util::write_artifact;
use crate::config::{load_config, GenWorldConfig};
use crate::manifest::Manifest;
use crate::Common;

#[derive(Args)]
pub struct GenWorldArgs {
    #[command(flatten)]
    pub common: Common,
    /// Region count override for the generated region map.
    #[arg(long)]
    pub regions: Option<usize>,
}

pub fn run(args: &GenWorldArgs) -> Result<()> {
    let cfg: GenWorldConfig = load_config(args.common.config.as_deref())?;
    let seed = args.common.seed.unwrap_or(cfg.seed);
    let n_regions = args.regions.unwrap_or(cfg.regions);
    let mut manifest = Manifest::new("gen-world", &args.common);
    if let Some(p) = &args.common.config {
        manifest.input_file(p)?;
    }

    let started = Instant::now();
    let world = generate_world(seed, &cfg.world, &cfg.kernel)?;
    let regions = generate_region_map(seed, cfg.world.rows, cfg.world.cols, n_regions)?;
    manifest.timing("generate", started);

    let started = Instant::now();
    let out = &args.common.out_dir;
    std::fs::create_dir_all(out).map_err(|e| airgrad_core::CoreError::io(out, e))?;
    save_world(&world, out)?;
    for id in ChannelId::ALL {
        manifest.output(&format!("channel_{}.csv", id.name()));
    }
    manifest.output("population.csv");
    manifest.output("stations.csv");
    manifest.output("cities.csv");
    save_kernel(out, &cfg.kernel)?;
    manifest.output(KERNEL_FILE);

    let mut csv = String::from("row,col,region\n");
    for r in 0..cfg.world.rows {
        for c in 0..cfg.world.cols {
            let name = regions.region_of(r, c).expect("generator maps every cell");
            let _ = writeln!(csv, "{r},{c},{name}");
        }
    }
    write_artifact(out, "regions.csv", &csv, &mut manifest)?;
    manifest.timing("write", started);

    println!(
        "world: {}x{} cells, {} stations, {} cities, seed {seed} -> {}",
        world.rows,
        world.cols,
        world.stations.len(),
        world.cities.len(),
        out.display()
    );
    manifest.write(out)
}
