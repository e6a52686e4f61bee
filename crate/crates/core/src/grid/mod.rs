//! Absolute spatial grid, channel registry, stations, windows, weights,
//! and dataset splits.

mod split;
mod weights;
mod window;
mod worldfile;

pub use split::{split_dataset, DatasetSplit};
pub use weights::{compute_station_weights, represented_population};
pub use window::{extract_window, normalize_stack, GridStack, NormalizedStack};
pub use worldfile::{load_world, save_world};
pub(crate) use worldfile::{parse_field, CsvLines};

use std::collections::BTreeMap;

use crate::error::{CoreError, Result};

/// Number of input channels.
pub const NUM_CHANNELS: usize = 8;
/// Number of emission channels (the leading channels); the rest are geography.
pub const NUM_EMISSION_CHANNELS: usize = 5;

/// The eight input channels: five sectoral energy-use fields followed by
/// three geography fields.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ChannelId {
    /// Rural and residential coal use (tce/yr).
    Rrc,
    /// Industrial coal use (tce/yr).
    Idc,
    /// Industrial oil use (tce/yr).
    Ido,
    /// Service-sector coal use (tce/yr).
    Svc,
    /// Road-transport oil use (tce/yr).
    Trn,
    /// Altitude (m).
    Alt,
    /// Annual mean temperature (degC).
    Tem,
    /// Annual precipitation (mm).
    Pcp,
}

impl ChannelId {
    pub const ALL: [ChannelId; NUM_CHANNELS] = [
        ChannelId::Rrc,
        ChannelId::Idc,
        ChannelId::Ido,
        ChannelId::Svc,
        ChannelId::Trn,
        ChannelId::Alt,
        ChannelId::Tem,
        ChannelId::Pcp,
    ];

    pub const EMISSION: [ChannelId; NUM_EMISSION_CHANNELS] = [
        ChannelId::Rrc,
        ChannelId::Idc,
        ChannelId::Ido,
        ChannelId::Svc,
        ChannelId::Trn,
    ];

    pub fn index(self) -> usize {
        match self {
            ChannelId::Rrc => 0,
            ChannelId::Idc => 1,
            ChannelId::Ido => 2,
            ChannelId::Svc => 3,
            ChannelId::Trn => 4,
            ChannelId::Alt => 5,
            ChannelId::Tem => 6,
            ChannelId::Pcp => 7,
        }
    }

    pub fn from_index(idx: usize) -> Option<ChannelId> {
        ChannelId::ALL.get(idx).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            ChannelId::Rrc => "RRC",
            ChannelId::Idc => "IDC",
            ChannelId::Ido => "IDO",
            ChannelId::Svc => "SVC",
            ChannelId::Trn => "TRN",
            ChannelId::Alt => "ALT",
            ChannelId::Tem => "TEM",
            ChannelId::Pcp => "PCP",
        }
    }

    pub fn parse(s: &str) -> Result<ChannelId> {
        ChannelId::ALL
            .iter()
            .copied()
            .find(|c| c.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| CoreError::Invalid(format!("unknown channel '{s}'")))
    }

    /// True for the energy-use channels that carry emissions.
    pub fn is_emission(self) -> bool {
        self.index() < NUM_EMISSION_CHANNELS
    }
}

impl std::fmt::Display for ChannelId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// The twelve adult age groups used for mortality accounting.
pub const AGE_GROUPS: [&str; 12] = [
    "25-29", "30-34", "35-39", "40-44", "45-49", "50-54", "55-59", "60-64", "65-69", "70-74",
    "75-79", "85+",
];

pub fn age_group_index(label: &str) -> Result<usize> {
    AGE_GROUPS
        .iter()
        .position(|g| *g == label)
        .ok_or_else(|| CoreError::Invalid(format!("unknown age group '{label}'")))
}

/// A retained monitoring station pinned to one grid cell.
#[derive(Clone, Debug, PartialEq)]
pub struct Station {
    pub id: String,
    pub row: usize,
    pub col: usize,
    pub city_id: String,
    /// Observed annual mean PM2.5 (ug/m3).
    pub pm25: f64,
}

/// A raw monitor reading before per-cell deduplication.
#[derive(Clone, Debug)]
pub struct RawStation {
    pub id: String,
    pub row: i64,
    pub col: i64,
    pub city_id: String,
    pub pm25: f64,
}

/// The absolute grid: channel rasters, gridded population, stations, and
/// city populations. Immutable once loaded.
#[derive(Clone, Debug)]
pub struct World {
    pub rows: usize,
    pub cols: usize,
    /// Edge length of one cell in km.
    pub cell_km: f64,
    /// One raster per channel, row-major `rows × cols`.
    channels: Vec<Vec<f64>>,
    /// Per-cell population by age group, row-major `rows × cols` of `[f64; 12]`.
    population: Vec<[f64; 12]>,
    pub stations: Vec<Station>,
    /// City id → total population represented by that city.
    pub cities: BTreeMap<String, f64>,
}

impl World {
    pub fn new(rows: usize, cols: usize, cell_km: f64) -> Result<World> {
        if rows == 0 || cols == 0 {
            return Err(CoreError::Invalid("grid must be non-empty".into()));
        }
        if !(cell_km.is_finite() && cell_km > 0.0) {
            return Err(CoreError::Invalid(format!("bad cell size {cell_km}")));
        }
        Ok(World {
            rows,
            cols,
            cell_km,
            channels: vec![vec![0.0; rows * cols]; NUM_CHANNELS],
            population: vec![[0.0; 12]; rows * cols],
            stations: Vec::new(),
            cities: BTreeMap::new(),
        })
    }

    #[inline]
    pub fn cell_index(&self, row: usize, col: usize) -> usize {
        debug_assert!(row < self.rows && col < self.cols);
        row * self.cols + col
    }

    pub fn in_bounds(&self, row: i64, col: i64) -> bool {
        row >= 0 && col >= 0 && (row as usize) < self.rows && (col as usize) < self.cols
    }

    pub fn channel(&self, id: ChannelId) -> &[f64] {
        &self.channels[id.index()]
    }

    pub fn channel_mut(&mut self, id: ChannelId) -> &mut [f64] {
        &mut self.channels[id.index()]
    }

    pub fn value(&self, id: ChannelId, row: usize, col: usize) -> f64 {
        self.channels[id.index()][self.cell_index(row, col)]
    }

    pub fn set_value(&mut self, id: ChannelId, row: usize, col: usize, v: f64) {
        let idx = self.cell_index(row, col);
        self.channels[id.index()][idx] = v;
    }

    pub fn population_at(&self, row: usize, col: usize) -> &[f64; 12] {
        &self.population[self.cell_index(row, col)]
    }

    pub fn population_at_mut(&mut self, row: usize, col: usize) -> &mut [f64; 12] {
        let idx = self.cell_index(row, col);
        &mut self.population[idx]
    }

    pub fn total_population(&self) -> f64 {
        self.population
            .iter()
            .map(|g| g.iter().sum::<f64>())
            .sum()
    }

    /// Total of an emission channel over the grid (tce/yr).
    pub fn channel_total(&self, id: ChannelId) -> f64 {
        self.channels[id.index()].iter().sum()
    }

    pub fn station(&self, id: &str) -> Option<&Station> {
        self.stations.iter().find(|s| s.id == id)
    }

    /// Checks the invariants that every loaded or generated world must hold.
    pub fn validate(&self) -> Result<()> {
        for id in ChannelId::EMISSION {
            if let Some(v) = self.channels[id.index()].iter().find(|v| **v < 0.0) {
                return Err(CoreError::Invalid(format!(
                    "negative value {v} in emission channel {id}"
                )));
            }
        }
        let mut seen = std::collections::HashSet::new();
        for s in &self.stations {
            if s.row >= self.rows || s.col >= self.cols {
                return Err(CoreError::Invalid(format!(
                    "station {} at ({}, {}) lies outside the {}x{} grid",
                    s.id, s.row, s.col, self.rows, self.cols
                )));
            }
            if !seen.insert((s.row, s.col)) {
                return Err(CoreError::Invalid(format!(
                    "more than one station in cell ({}, {})",
                    s.row, s.col
                )));
            }
            if !self.cities.contains_key(&s.city_id) {
                return Err(CoreError::Invalid(format!(
                    "station {} references unknown city {}",
                    s.id, s.city_id
                )));
            }
        }
        Ok(())
    }
}

/// Outcome of collapsing raw monitors onto grid cells.
#[derive(Clone, Debug)]
pub struct DedupeReport {
    pub raw_count: usize,
    pub retained_count: usize,
    pub merged_cells: usize,
}

/// Collapses raw monitors to at most one station per cell. Co-located
/// monitors are merged into one station whose reading is the mean of the
/// group; monitors outside the grid are rejected.
pub fn dedupe_stations(raw: &[RawStation], world: &World) -> Result<(Vec<Station>, DedupeReport)> {
    for r in raw {
        if !world.in_bounds(r.row, r.col) {
            return Err(CoreError::Invalid(format!(
                "monitor {} at ({}, {}) lies outside the {}x{} grid",
                r.id, r.row, r.col, world.rows, world.cols
            )));
        }
    }
    // Group by cell, preserving first-appearance order.
    let mut order: Vec<(usize, usize)> = Vec::new();
    let mut groups: BTreeMap<(usize, usize), Vec<&RawStation>> = BTreeMap::new();
    for r in raw {
        let key = (r.row as usize, r.col as usize);
        if !groups.contains_key(&key) {
            order.push(key);
        }
        groups.entry(key).or_default().push(r);
    }
    let mut stations = Vec::with_capacity(order.len());
    let mut merged_cells = 0;
    for key in &order {
        let members = &groups[key];
        if members.len() > 1 {
            merged_cells += 1;
        }
        let mean = members.iter().map(|m| m.pm25).sum::<f64>() / members.len() as f64;
        let first = members[0];
        stations.push(Station {
            id: first.id.clone(),
            row: key.0,
            col: key.1,
            city_id: first.city_id.clone(),
            pm25: mean,
        });
    }
    let report = DedupeReport {
        raw_count: raw.len(),
        retained_count: stations.len(),
        merged_cells,
    };
    Ok((stations, report))
}
