use rand_distr::{Distribution, Normal};

use crate::error::{CoreError, Result};
use crate::grid::{ChannelId, Station, World, NUM_EMISSION_CHANNELS};
use crate::health::{mean_inverse_rr, DamageField, DemographyTable, EmissionFactors, GemmParams};
use crate::rng::stream;
use crate::synth::kernel::OracleKernel;

/// Pre-saturation emission-driven concentration at a cell:
/// `Σ_k β_k Σ_ij x_ijk · exp(−d_ij/λ)` over the whole grid.
fn emission_sum(world: &World, row: usize, col: usize, kernel: &OracleKernel) -> f64 {
    let channels: Vec<(&[f64], f64)> = (0..NUM_EMISSION_CHANNELS)
        .filter(|k| kernel.beta[*k] > 0.0)
        .map(|k| {
            let id = ChannelId::from_index(k).expect("emission channel index");
            (world.channel(id), kernel.beta[k])
        })
        .collect();
    if channels.is_empty() {
        return 0.0;
    }
    let mut s = 0.0;
    for r in 0..world.rows {
        let dr = r as f64 - row as f64;
        for c in 0..world.cols {
            let dc = c as f64 - col as f64;
            let d = world.cell_km * (dr * dr + dc * dc).sqrt();
            let decay = (-d / kernel.lambda_km).exp();
            let i = r * world.cols + c;
            for (data, beta) in &channels {
                s += beta * data[i] * decay;
            }
        }
    }
    s
}

/// Saturating response: identity when the scale is zero (linear oracle).
fn sat(s: f64, a: f64) -> f64 {
    if a == 0.0 {
        s
    } else {
        a * (1.0 - (-s / a).exp())
    }
}

fn sat_slope(s: f64, a: f64) -> f64 {
    if a == 0.0 {
        1.0
    } else {
        (-s / a).exp()
    }
}

fn geography_term(world: &World, row: usize, col: usize, kernel: &OracleKernel) -> f64 {
    kernel.gamma_altitude * world.value(ChannelId::Alt, row, col)
        + kernel.gamma_temperature * world.value(ChannelId::Tem, row, col)
        + kernel.gamma_precipitation * world.value(ChannelId::Pcp, row, col)
}

fn check_cell(world: &World, row: usize, col: usize, what: &str) -> Result<()> {
    if row >= world.rows || col >= world.cols {
        return Err(CoreError::Invalid(format!(
            "{what} cell ({row}, {col}) outside {}x{} grid",
            world.rows, world.cols
        )));
    }
    Ok(())
}

fn concentration_at(world: &World, row: usize, col: usize, kernel: &OracleKernel) -> f64 {
    kernel.base
        + sat(emission_sum(world, row, col, kernel), kernel.saturation)
        + geography_term(world, row, col, kernel)
}

/// Noiseless ground-truth annual concentration at a station's cell.
pub fn oracle_concentration(world: &World, station: &Station, kernel: &OracleKernel) -> Result<f64> {
    kernel.validate()?;
    check_cell(world, station.row, station.col, "station")?;
    Ok(concentration_at(world, station.row, station.col, kernel))
}

/// Rewrites every station's observed PM2.5 as the oracle concentration
/// plus Gaussian noise from the kernel's observation stream. Each station
/// draws from its own stream keyed by station index, so observations do
/// not depend on iteration order and re-observing is idempotent.
pub fn set_station_observations(world: &mut World, kernel: &OracleKernel) -> Result<()> {
    kernel.validate()?;
    let noise = if kernel.noise_std > 0.0 {
        Some(Normal::new(0.0, kernel.noise_std).expect("valid normal"))
    } else {
        None
    };
    for i in 0..world.stations.len() {
        let (row, col) = (world.stations[i].row, world.stations[i].col);
        check_cell(world, row, col, "station")?;
        let mut c = concentration_at(world, row, col, kernel);
        if let Some(dist) = &noise {
            c += dist.sample(&mut stream(kernel.noise_seed, "observation", i as u64));
        }
        world.stations[i].pm25 = c;
    }
    Ok(())
}

/// Ground-truth sensitivity of a station's concentration to one more unit
/// of energy use at a cell: `β_k · exp(−d/λ)`, times the saturation slope
/// at the station's current load when saturation is on. Geography channels
/// have no dispersion kernel and are rejected.
pub fn oracle_marginal(
    world: &World,
    station: &Station,
    row: usize,
    col: usize,
    channel: ChannelId,
    kernel: &OracleKernel,
) -> Result<f64> {
    kernel.validate()?;
    if !channel.is_emission() {
        return Err(CoreError::Invalid(format!(
            "oracle marginals exist for emission channels only, not {}",
            channel.name()
        )));
    }
    check_cell(world, station.row, station.col, "station")?;
    check_cell(world, row, col, "probe")?;
    let dr = row as f64 - station.row as f64;
    let dc = col as f64 - station.col as f64;
    let d = world.cell_km * (dr * dr + dc * dc).sqrt();
    let slope = if kernel.saturation == 0.0 {
        1.0
    } else {
        sat_slope(
            emission_sum(world, station.row, station.col, kernel),
            kernel.saturation,
        )
    };
    Ok(kernel.beta[channel.index()] * (-d / kernel.lambda_km).exp() * slope)
}

/// Analytic counterpart of the model-based marginal damage field: every
/// station's oracle marginals over its window are converted to avoided
/// deaths at the station's oracle baseline, valued, and scatter-added per
/// ton of CO2. Used to judge how faithfully a trained surrogate localizes
/// damages.
#[allow(clippy::too_many_arguments)]
pub fn oracle_damage_field(
    world: &World,
    kernel: &OracleKernel,
    sector: ChannelId,
    half_extent: usize,
    demography: &DemographyTable,
    gemm: &GemmParams,
    vsl_usd: f64,
    factors: &EmissionFactors,
) -> Result<DamageField> {
    kernel.validate()?;
    gemm.validate()?;
    demography.validate()?;
    let factor = factors.factor(sector)?;
    if half_extent == 0 {
        return Err(CoreError::Invalid(
            "window half-extent must be positive".into(),
        ));
    }
    if !(vsl_usd.is_finite() && vsl_usd >= 0.0) {
        return Err(CoreError::Invalid(format!(
            "value of statistical life must be nonnegative, got {vsl_usd}"
        )));
    }
    let pops = demography.station_populations(world)?;
    let beta = kernel.beta[sector.index()];
    let mut md = vec![0.0; world.rows * world.cols];
    let mut covered = vec![false; world.rows * world.cols];
    for (n, station) in world.stations.iter().enumerate() {
        check_cell(world, station.row, station.col, "station")?;
        let deaths_weight: f64 = demography
            .mortality
            .iter()
            .zip(&pops[n])
            .map(|(m, p)| m * p)
            .sum();
        let load = emission_sum(world, station.row, station.col, kernel);
        let slope = sat_slope(load, kernel.saturation);
        let c0 = kernel.base
            + sat(load, kernel.saturation)
            + geography_term(world, station.row, station.col, kernel);
        let base = mean_inverse_rr(c0, gemm);
        let h = half_extent as i64;
        for di in -h..=h {
            for dj in -h..=h {
                let (r, c) = (station.row as i64 + di, station.col as i64 + dj);
                if !world.in_bounds(r, c) {
                    continue;
                }
                let d = world.cell_km * ((di * di + dj * dj) as f64).sqrt();
                let g = beta * (-d / kernel.lambda_km).exp() * slope;
                let dm = deaths_weight * (mean_inverse_rr(c0 + g, gemm) - base);
                let idx = r as usize * world.cols + c as usize;
                md[idx] += -vsl_usd * dm / factor;
                covered[idx] = true;
            }
        }
    }
    let negative_cells = md
        .iter()
        .zip(&covered)
        .filter(|(v, cov)| **cov && **v < 0.0)
        .count();
    Ok(DamageField {
        sector,
        rows: world.rows,
        cols: world.cols,
        emission_factor: factor,
        md,
        covered,
        negative_cells,
        clamped: false,
    })
}
