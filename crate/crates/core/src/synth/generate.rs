use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::grid::{ChannelId, World, NUM_EMISSION_CHANNELS};
use crate::health::RegionMap;
use crate::rng::stream;
use crate::synth::kernel::OracleKernel;
use crate::synth::oracle::set_station_observations;

/// National adult age structure used to split per-cell population into the
/// twelve mortality groups. Sums to one.
pub const ADULT_AGE_SHARES: [f64; 12] = [
    0.105, 0.105, 0.100, 0.100, 0.095, 0.095, 0.090, 0.080, 0.070, 0.060, 0.050, 0.050,
];

/// Shape and bookkeeping targets of a generated world.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    pub rows: usize,
    pub cols: usize,
    /// Cell edge length, km.
    pub cell_km: f64,
    pub n_stations: usize,
    pub n_cities: usize,
    /// Shared emission/population cluster count.
    pub n_clusters: usize,
    /// National totals per emission channel (RRC, IDC, IDO, SVC, TRN),
    /// tce/yr; each generated channel is rescaled to its total exactly.
    pub emission_totals: [f64; NUM_EMISSION_CHANNELS],
    /// National adult population spread over the grid.
    pub population_total: f64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            rows: 60,
            cols: 60,
            cell_km: 10.0,
            n_stations: 260,
            n_cities: 24,
            n_clusters: 6,
            emission_totals: [2.0e5, 8.0e6, 1.0e6, 3.0e5, 1.2e6],
            population_total: 8.0e7,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(CoreError::Config(format!(
                "grid must be nonempty, got {}x{}",
                self.rows, self.cols
            )));
        }
        if !(self.cell_km.is_finite() && self.cell_km > 0.0) {
            return Err(CoreError::Config(format!(
                "cell size must be positive, got {}",
                self.cell_km
            )));
        }
        let cells = self.rows * self.cols;
        if self.n_stations == 0 || self.n_stations > cells {
            return Err(CoreError::Config(format!(
                "station count must be in 1..={cells}, got {}",
                self.n_stations
            )));
        }
        if self.n_cities == 0 || self.n_cities > cells {
            return Err(CoreError::Config(format!(
                "city count must be in 1..={cells}, got {}",
                self.n_cities
            )));
        }
        if self.n_clusters == 0 {
            return Err(CoreError::Config("cluster count must be positive".into()));
        }
        for (k, t) in self.emission_totals.iter().enumerate() {
            if !(t.is_finite() && *t >= 0.0) {
                let name = ChannelId::from_index(k).map(ChannelId::name).unwrap_or("?");
                return Err(CoreError::Config(format!(
                    "emission total for {name} must be finite and nonnegative, got {t}"
                )));
            }
        }
        if !(self.population_total.is_finite() && self.population_total > 0.0) {
            return Err(CoreError::Config(format!(
                "population total must be positive, got {}",
                self.population_total
            )));
        }
        Ok(())
    }
}

/// A shared emission/population hotspot with fractional cell coordinates.
struct Cluster {
    row: f64,
    col: f64,
    sigma: f64,
}

fn draw_clusters(seed: u64, config: &GenConfig) -> Vec<Cluster> {
    let mut rng = stream(seed, "clusters", 0);
    let min_dim = config.rows.min(config.cols) as f64;
    let lo = (min_dim / 12.0).max(1.5);
    let hi = (min_dim / 5.0).max(lo + 1.0);
    (0..config.n_clusters)
        .map(|_| Cluster {
            row: rng.gen_range(0.0..config.rows as f64),
            col: rng.gen_range(0.0..config.cols as f64),
            sigma: rng.gen_range(lo..hi),
        })
        .collect()
}

/// Gaussian hill profile around the cluster centres; `widen` stretches the
/// footprint (population spreads further than the emission cores).
fn cluster_profile(clusters: &[Cluster], amps: &[f64], widen: f64, r: usize, c: usize) -> f64 {
    clusters
        .iter()
        .zip(amps)
        .map(|(cl, amp)| {
            let dr = r as f64 - cl.row;
            let dc = c as f64 - cl.col;
            let s = cl.sigma * widen;
            amp * (-(dr * dr + dc * dc) / (2.0 * s * s)).exp()
        })
        .sum()
}

/// A smooth deterministic field scaled to [0, 1]: a few low-frequency
/// sinusoids with seeded amplitudes and phases, then min-max normalized.
fn smooth_unit_field(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Vec<f64> {
    use std::f64::consts::TAU;
    let waves: Vec<[f64; 5]> = (0..3)
        .map(|_| {
            [
                rng.gen_range(0.5..1.0),
                rng.gen_range(0.5..2.5),
                rng.gen_range(0.5..2.5),
                rng.gen_range(0.0..1.0),
                rng.gen_range(0.0..1.0),
            ]
        })
        .collect();
    let mut field = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            let mut v = 0.0;
            for [a, fr, fc, pr, pc] in &waves {
                v += a
                    * (TAU * (fr * r as f64 / rows as f64 + pr)).sin()
                    * (TAU * (fc * c as f64 / cols as f64 + pc)).cos();
            }
            field[r * cols + c] = v;
        }
    }
    let lo = field.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = field.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo < 1e-12 {
        field.iter_mut().for_each(|v| *v = 0.5);
    } else {
        field.iter_mut().for_each(|v| *v = (*v - lo) / (hi - lo));
    }
    field
}

/// Draws `n` distinct cells by a partial Fisher-Yates shuffle.
fn distinct_cells(rng: &mut ChaCha8Rng, rows: usize, cols: usize, n: usize) -> Vec<(usize, usize)> {
    let total = rows * cols;
    let mut cells: Vec<usize> = (0..total).collect();
    for i in 0..n {
        let j = rng.gen_range(i..total);
        cells.swap(i, j);
    }
    cells[..n].iter().map(|&i| (i / cols, i % cols)).collect()
}

fn nearest_center(centers: &[(usize, usize)], r: usize, c: usize) -> usize {
    let mut best = 0usize;
    let mut best_d = i64::MAX;
    for (i, (cr, cc)) in centers.iter().enumerate() {
        let dr = r as i64 - *cr as i64;
        let dc = c as i64 - *cc as i64;
        let d = dr * dr + dc * dc;
        if d < best_d {
            best = i;
            best_d = d;
        }
    }
    best
}

/// Builds a synthetic world whose station observations obey the kernel:
/// clustered log-normal emissions rescaled to the configured national
/// totals, smooth geography, population concentrated near the emission
/// clusters, stations on distinct random cells, and city populations
/// aggregated over the cells nearest to each city centre. Identical seeds
/// yield identical worlds.
pub fn generate_world(seed: u64, config: &GenConfig, kernel: &OracleKernel) -> Result<World> {
    config.validate()?;
    kernel.validate()?;
    let mut world = World::new(config.rows, config.cols, config.cell_km)?;
    let clusters = draw_clusters(seed, config);

    for k in 0..NUM_EMISSION_CHANNELS {
        let channel = ChannelId::from_index(k).expect("emission channel index");
        let total = config.emission_totals[k];
        if total == 0.0 {
            continue;
        }
        let mut rng = stream(seed, "emission", k as u64);
        let amps: Vec<f64> = {
            let dist = LogNormal::new(0.0, 0.8).expect("lognormal");
            (0..clusters.len()).map(|_| dist.sample(&mut rng)).collect()
        };
        let rough = LogNormal::new(0.0, 0.35).expect("lognormal");
        let data = world.channel_mut(channel);
        let mut sum = 0.0;
        for r in 0..config.rows {
            for c in 0..config.cols {
                // Small floor keeps every cell weakly emitting so rescaling
                // and log-based diagnostics stay well defined.
                let v = (0.02 + cluster_profile(&clusters, &amps, 1.0, r, c)) * rough.sample(&mut rng);
                data[r * config.cols + c] = v;
                sum += v;
            }
        }
        let scale = total / sum;
        data.iter_mut().for_each(|v| *v *= scale);
    }

    let mut geo_rng = stream(seed, "geography", 0);
    let s_alt = smooth_unit_field(&mut geo_rng, config.rows, config.cols);
    let s_tem = smooth_unit_field(&mut geo_rng, config.rows, config.cols);
    let s_pcp = smooth_unit_field(&mut geo_rng, config.rows, config.cols);
    for r in 0..config.rows {
        for c in 0..config.cols {
            let i = r * config.cols + c;
            let alt = 250.0 + 700.0 * s_alt[i];
            world.set_value(ChannelId::Alt, r, c, alt);
            world.set_value(ChannelId::Tem, r, c, 24.0 - 0.0065 * alt + 5.0 * (s_tem[i] - 0.5));
            world.set_value(ChannelId::Pcp, r, c, 350.0 + 700.0 * s_pcp[i]);
        }
    }

    let mut pop_rng = stream(seed, "population", 0);
    let pop_amps: Vec<f64> = {
        let dist = LogNormal::new(0.0, 0.6).expect("lognormal");
        (0..clusters.len()).map(|_| dist.sample(&mut pop_rng)).collect()
    };
    let mut density = vec![0.0; config.rows * config.cols];
    let mut dsum = 0.0;
    for r in 0..config.rows {
        for c in 0..config.cols {
            let v = 0.03 + cluster_profile(&clusters, &pop_amps, 1.6, r, c);
            density[r * config.cols + c] = v;
            dsum += v;
        }
    }
    for r in 0..config.rows {
        for c in 0..config.cols {
            let cell_total = density[r * config.cols + c] / dsum * config.population_total;
            let groups = world.population_at_mut(r, c);
            for (g, share) in ADULT_AGE_SHARES.iter().enumerate() {
                groups[g] = cell_total * share;
            }
        }
    }

    let mut station_rng = stream(seed, "stations", 0);
    let station_cells = distinct_cells(&mut station_rng, config.rows, config.cols, config.n_stations);

    let mut city_rng = stream(seed, "cities", 0);
    let city_centers = distinct_cells(&mut city_rng, config.rows, config.cols, config.n_cities);
    let city_names: Vec<String> = (1..=config.n_cities).map(|i| format!("city_{i:02}")).collect();
    let mut city_pop = vec![0.0; config.n_cities];
    for r in 0..config.rows {
        for c in 0..config.cols {
            let total: f64 = world.population_at(r, c).iter().sum();
            city_pop[nearest_center(&city_centers, r, c)] += total;
        }
    }
    for (name, pop) in city_names.iter().zip(&city_pop) {
        world.cities.insert(name.clone(), *pop);
    }

    for (i, (r, c)) in station_cells.iter().enumerate() {
        let city = nearest_center(&city_centers, *r, *c);
        world.stations.push(crate::grid::Station {
            id: format!("s{:04}", i + 1),
            row: *r,
            col: *c,
            city_id: city_names[city].clone(),
            pm25: 0.0,
        });
    }

    set_station_observations(&mut world, kernel)?;
    world.validate()?;
    Ok(world)
}

/// Partitions the grid into `n_regions` nearest-centre regions named
/// `region_1` … `region_n` (in that order), covering every cell.
pub fn generate_region_map(seed: u64, rows: usize, cols: usize, n_regions: usize) -> Result<RegionMap> {
    if rows == 0 || cols == 0 {
        return Err(CoreError::Config(format!(
            "grid must be nonempty, got {rows}x{cols}"
        )));
    }
    if n_regions == 0 || n_regions > rows * cols {
        return Err(CoreError::Config(format!(
            "region count must be in 1..={}, got {n_regions}",
            rows * cols
        )));
    }
    let mut rng = stream(seed, "regions", 0);
    let centers = distinct_cells(&mut rng, rows, cols, n_regions);
    let names: Vec<String> = (1..=n_regions).map(|i| format!("region_{i}")).collect();
    let mut map = RegionMap::default();
    // Seed each region with its own centre first so the name order is the
    // numeric order, independent of which cell happens to come first.
    for (i, (r, c)) in centers.iter().enumerate() {
        map.insert(*r, *c, &names[i]);
    }
    for r in 0..rows {
        for c in 0..cols {
            map.insert(r, c, &names[nearest_center(&centers, r, c)]);
        }
    }
    Ok(map)
}
