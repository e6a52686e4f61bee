use crate::error::Result;
use crate::grid::{extract_window, normalize_stack, NormalizedStack, World, NUM_CHANNELS};

/// Per-station model inputs and targets, aligned with `world.stations`.
pub struct SampleSet {
    pub norms: Vec<NormalizedStack>,
    pub means: Vec<[f64; NUM_CHANNELS]>,
    pub targets: Vec<f64>,
    pub station_ids: Vec<String>,
    pub window_size: usize,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }
}

/// Cuts, normalizes, and stacks the window of every station.
pub fn build_samples(world: &World, half_extent: usize) -> Result<SampleSet> {
    let mut norms = Vec::with_capacity(world.stations.len());
    let mut means = Vec::with_capacity(world.stations.len());
    let mut targets = Vec::with_capacity(world.stations.len());
    let mut station_ids = Vec::with_capacity(world.stations.len());
    for station in &world.stations {
        let stack = extract_window(world, station, half_extent)?;
        means.push(stack.channel_means());
        norms.push(normalize_stack(&stack));
        targets.push(station.pm25);
        station_ids.push(station.id.clone());
    }
    Ok(SampleSet {
        norms,
        means,
        targets,
        station_ids,
        window_size: 2 * half_extent + 1,
    })
}
