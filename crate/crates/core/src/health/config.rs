use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::grid::{
    age_group_index, parse_field, represented_population, ChannelId, CsvLines, World, AGE_GROUPS,
};

/// Shape of the NCD+LRI hazard-ratio curve and the distribution of its
/// strength parameter θ ~ Normal(`theta_mean`, `theta_sd`).
///
/// Defaults carry the published GEMM NCD+LRI adult values (external
/// epidemiological source); analyses with other endpoints supply their own.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GemmParams {
    pub theta_mean: f64,
    pub theta_sd: f64,
    pub alpha: f64,
    pub mu: f64,
    pub upsilon: f64,
    /// Counterfactual concentration (µg/m³) below which no risk is attributed.
    pub cf: f64,
}

impl Default for GemmParams {
    fn default() -> GemmParams {
        GemmParams {
            theta_mean: 0.1430,
            theta_sd: 0.01807,
            alpha: 1.6,
            mu: 15.5,
            upsilon: 36.8,
            cf: 2.4,
        }
    }
}

impl GemmParams {
    pub fn validate(&self) -> Result<()> {
        let all_finite = [self.theta_mean, self.theta_sd, self.alpha, self.mu, self.upsilon, self.cf]
            .iter()
            .all(|v| v.is_finite());
        if !all_finite {
            return Err(CoreError::Config("hazard-curve parameters must be finite".into()));
        }
        if self.theta_sd < 0.0 {
            return Err(CoreError::Config("theta_sd must be nonnegative".into()));
        }
        if self.alpha <= 0.0 {
            return Err(CoreError::Config("alpha must be positive".into()));
        }
        if self.upsilon <= 0.0 {
            return Err(CoreError::Config("upsilon must be positive".into()));
        }
        if self.cf < 0.0 {
            return Err(CoreError::Config("counterfactual concentration must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Baseline mortality rates and national age shares for the 12 adult age
/// groups (25–29 … 85+).
///
/// The age structure of the population each station represents is not part
/// of the world data, so per-station group populations default to the
/// station's represented population times these national shares.
#[derive(Clone, Debug, PartialEq)]
pub struct DemographyTable {
    /// Baseline mortality rate per group, deaths per person per year.
    pub mortality: [f64; 12],
    /// Fraction of the represented population in each group; sums to 1.
    pub share: [f64; 12],
}

impl DemographyTable {
    pub fn new(mortality: [f64; 12], share: [f64; 12]) -> Result<DemographyTable> {
        let table = DemographyTable { mortality, share };
        table.validate()?;
        Ok(table)
    }

    pub fn validate(&self) -> Result<()> {
        for (m, label) in self.mortality.iter().zip(AGE_GROUPS) {
            if !(m.is_finite() && (0.0..=1.0).contains(m)) {
                return Err(CoreError::Config(format!(
                    "mortality rate for group {label} must lie in [0, 1], got {m}"
                )));
            }
        }
        let mut sum = 0.0;
        for (s, label) in self.share.iter().zip(AGE_GROUPS) {
            if !(s.is_finite() && *s >= 0.0) {
                return Err(CoreError::Config(format!(
                    "age share for group {label} must be nonnegative, got {s}"
                )));
            }
            sum += s;
        }
        if (sum - 1.0).abs() > 1e-6 {
            return Err(CoreError::Config(format!(
                "age shares must sum to 1, got {sum}"
            )));
        }
        Ok(())
    }

    /// Per-station population by age group: the station's represented
    /// population split by the national age shares.
    pub fn station_populations(&self, world: &World) -> Result<Vec<[f64; 12]>> {
        let represented = represented_population(world)?;
        Ok(represented
            .iter()
            .map(|pop| {
                let mut groups = [0.0; 12];
                for (g, s) in groups.iter_mut().zip(self.share) {
                    *g = pop * s;
                }
                groups
            })
            .collect())
    }

    /// Σ_m rate_m · share_m: expected baseline deaths per represented
    /// person per year, used to collapse the age sum in damage math.
    pub fn death_rate_per_person(&self) -> f64 {
        self.mortality
            .iter()
            .zip(self.share)
            .map(|(m, s)| m * s)
            .sum()
    }
}

/// Reads a demography table from a CSV file with header
/// `age_group,mortality,share` and exactly one row per age group.
pub fn load_demography(path: &Path) -> Result<DemographyTable> {
    let text = std::fs::read_to_string(path).map_err(|e| CoreError::io(path, e))?;
    let mut csv = CsvLines::new(path, &text);
    csv.expect_header(&["age_group", "mortality", "share"])?;
    let mut mortality = [f64::NAN; 12];
    let mut share = [f64::NAN; 12];
    let mut seen = [false; 12];
    while let Some((line, fields)) = csv.next_row() {
        if fields.len() != 3 {
            return Err(csv.schema(line, format!("expected 3 fields, found {}", fields.len())));
        }
        let idx = age_group_index(fields[0]).map_err(|_| {
            csv.schema(line, format!("unknown age group '{}'", fields[0]))
        })?;
        if seen[idx] {
            return Err(csv.schema(line, format!("duplicate age group '{}'", fields[0])));
        }
        seen[idx] = true;
        mortality[idx] = parse_field(&csv, line, "mortality", fields[1])?;
        share[idx] = parse_field(&csv, line, "share", fields[2])?;
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(CoreError::schema(
            &path.display().to_string(),
            0,
            format!("age group '{}' is missing", AGE_GROUPS[missing]),
        ));
    }
    DemographyTable::new(mortality, share)
}

/// Benefit-transfer inputs for the value of a statistical life.
///
/// Defaults carry the published base estimate (8.7M US$(2015)) with the
/// high-income income elasticity of 0.8 and 2015 per-capita GDP levels;
/// all four are ordinary config values.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VslConfig {
    /// Base-country estimate, dollars.
    pub base_vsl: f64,
    /// Base-country per-capita GDP, same units as `pc_gdp_target`.
    pub pc_gdp_base: f64,
    /// Target-country per-capita GDP.
    pub pc_gdp_target: f64,
    pub elasticity: f64,
}

impl Default for VslConfig {
    fn default() -> VslConfig {
        VslConfig {
            base_vsl: 8.7e6,
            pc_gdp_base: 56863.4,
            pc_gdp_target: 8066.9,
            elasticity: 0.8,
        }
    }
}

impl VslConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = [self.base_vsl, self.pc_gdp_base, self.pc_gdp_target, self.elasticity]
            .iter()
            .all(|v| v.is_finite() && *v > 0.0);
        if ok {
            Ok(())
        } else {
            Err(CoreError::Config(
                "all value-of-statistical-life inputs must be positive".into(),
            ))
        }
    }
}

/// Tons of CO2 emitted per ton of coal equivalent, one factor per emission
/// channel. These conversions are analysis inputs with no universal value,
/// so every field is required.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmissionFactors {
    pub rrc: f64,
    pub idc: f64,
    pub ido: f64,
    pub svc: f64,
    pub trn: f64,
}

impl EmissionFactors {
    pub fn validate(&self) -> Result<()> {
        for id in ChannelId::EMISSION {
            let f = self.factor(id)?;
            if !(f.is_finite() && f > 0.0) {
                return Err(CoreError::Config(format!(
                    "emission factor for {} must be positive, got {f}",
                    id.name()
                )));
            }
        }
        Ok(())
    }

    /// tCO2 per tce for an emission channel.
    pub fn factor(&self, sector: ChannelId) -> Result<f64> {
        match sector {
            ChannelId::Rrc => Ok(self.rrc),
            ChannelId::Idc => Ok(self.idc),
            ChannelId::Ido => Ok(self.ido),
            ChannelId::Svc => Ok(self.svc),
            ChannelId::Trn => Ok(self.trn),
            other => Err(CoreError::Invalid(format!(
                "{} is a geography channel and has no emission factor",
                other.name()
            ))),
        }
    }
}

/// Assignment of absolute grid cells to named reporting regions.
///
/// Regions keep their file order; cells absent from the map fall into an
/// explicit "unmapped" bucket during aggregation.
#[derive(Clone, Debug, Default)]
pub struct RegionMap {
    names: Vec<String>,
    cells: HashMap<(usize, usize), usize>,
}

impl RegionMap {
    /// Region names in first-appearance order.
    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn region_of(&self, row: usize, col: usize) -> Option<&str> {
        self.cells
            .get(&(row, col))
            .map(|idx| self.names[*idx].as_str())
    }

    pub fn region_index(&self, row: usize, col: usize) -> Option<usize> {
        self.cells.get(&(row, col)).copied()
    }

    pub fn insert(&mut self, row: usize, col: usize, region: &str) {
        let idx = match self.names.iter().position(|n| n == region) {
            Some(i) => i,
            None => {
                self.names.push(region.to_string());
                self.names.len() - 1
            }
        };
        self.cells.insert((row, col), idx);
    }

    pub fn len_cells(&self) -> usize {
        self.cells.len()
    }
}

/// Reads a region map from a CSV file with header `row,col,region`.
pub fn load_region_map(path: &Path) -> Result<RegionMap> {
    let text = std::fs::read_to_string(path).map_err(|e| CoreError::io(path, e))?;
    let mut csv = CsvLines::new(path, &text);
    csv.expect_header(&["row", "col", "region"])?;
    let mut map = RegionMap::default();
    while let Some((line, fields)) = csv.next_row() {
        if fields.len() != 3 {
            return Err(csv.schema(line, format!("expected 3 fields, found {}", fields.len())));
        }
        let row: usize = parse_field(&csv, line, "row", fields[0])?;
        let col: usize = parse_field(&csv, line, "col", fields[1])?;
        if fields[2].is_empty() {
            return Err(csv.schema(line, "empty region name"));
        }
        if map.cells.contains_key(&(row, col)) {
            return Err(csv.schema(line, format!("cell ({row}, {col}) mapped twice")));
        }
        map.insert(row, col, fields[2]);
    }
    Ok(map)
}

/// One curtailment scenario: scale all energy use of one emission sector
/// by `1 − curtailment` everywhere.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Scenario {
    pub sector: ChannelId,
    pub curtailment: f64,
}

impl Scenario {
    pub fn new(sector: ChannelId, curtailment: f64) -> Result<Scenario> {
        if !sector.is_emission() {
            return Err(CoreError::Invalid(format!(
                "{} is a geography channel and cannot be curtailed",
                sector.name()
            )));
        }
        if !(curtailment.is_finite() && (0.0..=1.0).contains(&curtailment)) {
            return Err(CoreError::Invalid(format!(
                "curtailment fraction must lie in [0, 1], got {curtailment}"
            )));
        }
        Ok(Scenario { sector, curtailment })
    }
}

/// The standard sweep grid: 2% to 20% in 2% steps.
pub fn default_sweep_fractions() -> Vec<f64> {
    (1..=10).map(|i| i as f64 * 0.02).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Station;

    fn write(path: &Path, text: &str) {
        std::fs::write(path, text).unwrap();
    }

    #[test]
    fn default_hazard_parameters_validate() {
        GemmParams::default().validate().unwrap();
        let mut bad = GemmParams::default();
        bad.alpha = 0.0;
        assert!(bad.validate().is_err());
        bad = GemmParams::default();
        bad.theta_sd = -0.1;
        assert!(bad.validate().is_err());
    }

    fn demography_csv(shares: &[f64; 12]) -> String {
        let mut text = String::from("age_group,mortality,share\n");
        for (label, s) in AGE_GROUPS.iter().zip(shares) {
            text.push_str(&format!("{label},0.01,{s}\n"));
        }
        text
    }

    #[test]
    fn demography_round_trips_through_csv() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mortality.csv");
        let shares = [1.0 / 12.0; 12];
        write(&path, &demography_csv(&shares));
        let table = load_demography(&path).unwrap();
        assert_eq!(table.mortality, [0.01; 12]);
        assert!((table.share.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((table.death_rate_per_person() - 0.01).abs() < 1e-15);
    }

    #[test]
    fn demography_rejects_missing_duplicate_and_invalid_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mortality.csv");

        // A group missing entirely.
        let mut text = String::from("age_group,mortality,share\n");
        for label in &AGE_GROUPS[..11] {
            text.push_str(&format!("{label},0.01,{}\n", 1.0 / 11.0));
        }
        write(&path, &text);
        let err = load_demography(&path).unwrap_err().to_string();
        assert!(err.contains("missing"), "{err}");

        // A duplicated group.
        let mut text = demography_csv(&[1.0 / 12.0; 12]);
        text.push_str("25-29,0.01,0.0\n");
        write(&path, &text);
        let err = load_demography(&path).unwrap_err().to_string();
        assert!(err.contains("duplicate"), "{err}");

        // Mortality out of range.
        write(&path, &demography_csv(&[1.0 / 12.0; 12]).replace("0.01", "1.5"));
        assert!(load_demography(&path).is_err());

        // Shares that do not sum to one.
        write(&path, &demography_csv(&[0.2; 12]));
        let err = load_demography(&path).unwrap_err().to_string();
        assert!(err.contains("sum to 1"), "{err}");
    }

    #[test]
    fn station_populations_split_city_population_by_shares() {
        let mut world = World::new(10, 10, 10.0).unwrap();
        world.cities.insert("a".into(), 1_000_000.0);
        world.cities.insert("b".into(), 4_000_000.0);
        let put = |world: &mut World, id: &str, row: usize, city: &str| {
            world.stations.push(Station {
                id: id.into(),
                row,
                col: 0,
                city_id: city.into(),
                pm25: 30.0,
            });
        };
        put(&mut world, "s0", 0, "a");
        put(&mut world, "s1", 1, "b");
        put(&mut world, "s2", 2, "b");
        let mut share = [0.0; 12];
        share[0] = 0.25;
        share[11] = 0.75;
        let table = DemographyTable::new([0.01; 12], share).unwrap();
        let pops = table.station_populations(&world).unwrap();
        assert_eq!(pops.len(), 3);
        assert!((pops[0][0] - 250_000.0).abs() < 1e-6);
        assert!((pops[0][11] - 750_000.0).abs() < 1e-6);
        assert!((pops[1][0] - 500_000.0).abs() < 1e-6);
        assert_eq!(pops[1], pops[2]);
        assert!(pops[0][5] == 0.0);
    }

    #[test]
    fn emission_factors_reject_geography_channels_and_bad_values() {
        let factors = EmissionFactors {
            rrc: 2.66,
            idc: 2.66,
            ido: 2.10,
            svc: 2.66,
            trn: 2.10,
        };
        factors.validate().unwrap();
        assert_eq!(factors.factor(ChannelId::Trn).unwrap(), 2.10);
        assert!(factors.factor(ChannelId::Alt).is_err());
        let mut bad = factors;
        bad.svc = 0.0;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn region_map_parses_and_buckets() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("regions.csv");
        write(&path, "row,col,region\n0,0,north\n0,1,north\n5,5,south\n");
        let map = load_region_map(&path).unwrap();
        assert_eq!(map.names(), ["north".to_string(), "south".to_string()]);
        assert_eq!(map.region_of(0, 1), Some("north"));
        assert_eq!(map.region_of(5, 5), Some("south"));
        assert_eq!(map.region_of(9, 9), None);
        assert_eq!(map.len_cells(), 3);

        write(&path, "row,col,region\n0,0,north\n0,0,south\n");
        let err = load_region_map(&path).unwrap_err().to_string();
        assert!(err.contains("mapped twice"), "{err}");
    }

    #[test]
    fn scenarios_validate_sector_and_fraction() {
        Scenario::new(ChannelId::Idc, 0.1).unwrap();
        Scenario::new(ChannelId::Trn, 0.0).unwrap();
        Scenario::new(ChannelId::Trn, 1.0).unwrap();
        assert!(Scenario::new(ChannelId::Tem, 0.1).is_err());
        assert!(Scenario::new(ChannelId::Idc, -0.01).is_err());
        assert!(Scenario::new(ChannelId::Idc, 1.01).is_err());
    }

    #[test]
    fn sweep_grid_has_ten_fractions_ending_at_twenty_percent() {
        let ps = default_sweep_fractions();
        assert_eq!(ps.len(), 10);
        assert!((ps[0] - 0.02).abs() < 1e-12);
        assert!((ps[9] - 0.20).abs() < 1e-12);
        for w in ps.windows(2) {
            assert!((w[1] - w[0] - 0.02).abs() < 1e-12);
        }
    }

    #[test]
    fn configs_deserialize_from_key_value_text() {
        let gemm: GemmParams = toml::from_str("theta_mean = 0.2\n").unwrap();
        assert_eq!(gemm.theta_mean, 0.2);
        assert_eq!(gemm.alpha, 1.6);
        let vsl: VslConfig = toml::from_str("").unwrap();
        assert_eq!(vsl.base_vsl, 8.7e6);
        let f: std::result::Result<EmissionFactors, _> = toml::from_str("rrc = 2.66\n");
        assert!(f.is_err(), "all five factors are mandatory");
        let f: EmissionFactors =
            toml::from_str("rrc = 2.66\nidc = 2.66\nido = 2.10\nsvc = 2.66\ntrn = 2.10\n").unwrap();
        assert_eq!(f.idc, 2.66);
    }
}
