use crate::error::{CoreError, Result};
use crate::grid::World;
use std::collections::BTreeMap;

/// Population each station represents: an equal share of its city's total,
/// in persons (not rescaled).
pub fn represented_population(world: &World) -> Result<Vec<f64>> {
    if world.stations.is_empty() {
        return Err(CoreError::Invalid("world has no stations".into()));
    }
    let mut per_city: BTreeMap<&str, usize> = BTreeMap::new();
    for s in &world.stations {
        *per_city.entry(s.city_id.as_str()).or_insert(0) += 1;
    }
    let mut raw = Vec::with_capacity(world.stations.len());
    for s in &world.stations {
        let pop = *world.cities.get(&s.city_id).ok_or_else(|| {
            CoreError::Invalid(format!(
                "station {} references unknown city {}",
                s.id, s.city_id
            ))
        })?;
        if !(pop.is_finite() && pop > 0.0) {
            return Err(CoreError::Invalid(format!(
                "city {} has non-positive population {pop}",
                s.city_id
            )));
        }
        raw.push(pop / per_city[s.city_id.as_str()] as f64);
    }
    Ok(raw)
}

/// Per-station evaluation weights: each station carries an equal share of
/// its city's population, and the weights are rescaled so their mean is 1.
pub fn compute_station_weights(world: &World) -> Result<Vec<f64>> {
    let raw = represented_population(world)?;
    let mean = raw.iter().sum::<f64>() / raw.len() as f64;
    Ok(raw.into_iter().map(|w| w / mean).collect())
}
