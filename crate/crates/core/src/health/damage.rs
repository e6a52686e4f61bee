use crate::error::{CoreError, Result};
use crate::grid::{extract_window, normalize_stack, ChannelId, World};
use crate::health::config::{DemographyTable, EmissionFactors, GemmParams, RegionMap, VslConfig};
use crate::health::gemm::mean_inverse_rr;
use crate::health::scenario::baseline_concentration;
use crate::model::ResCnn;

/// Value of a statistical life transferred to the target country:
/// `base · (pcGDP_target / pcGDP_base)^elasticity`.
pub fn vsl(config: &VslConfig) -> Result<f64> {
    config.validate()?;
    Ok(config.base_vsl * (config.pc_gdp_target / config.pc_gdp_base).powf(config.elasticity))
}

/// Absolute-grid marginal damages for one sector, dollars per ton of CO2.
#[derive(Clone, Debug)]
pub struct DamageField {
    pub sector: ChannelId,
    pub rows: usize,
    pub cols: usize,
    /// tCO2 per tce used to express the damages per ton of CO2.
    pub emission_factor: f64,
    /// Row-major `rows × cols` marginal damages; zero on uncovered cells.
    pub md: Vec<f64>,
    /// True where at least one station's window reaches the cell. Values
    /// on uncovered cells are meaningless, not zero damages.
    pub covered: Vec<bool>,
    /// Cells whose summed damage came out negative (possible for a trained
    /// model whose local gradient is negative), counted before any clamp.
    pub negative_cells: usize,
    /// Whether negative cells were clamped to zero for reporting.
    pub clamped: bool,
}

impl DamageField {
    pub fn md_at(&self, row: usize, col: usize) -> f64 {
        self.md[row * self.cols + col]
    }

    pub fn covered_at(&self, row: usize, col: usize) -> bool {
        self.covered[row * self.cols + col]
    }

    pub fn covered_cells(&self) -> usize {
        self.covered.iter().filter(|c| **c).count()
    }
}

/// Per-station, per-cell damage contributions in dollars per tCO2, kept
/// with their Chebyshev ring so distance restrictions reuse one pass.
struct CellContrib {
    row: usize,
    col: usize,
    /// max(|Δrow|, |Δcol|) from the station cell, in cells.
    cheb: usize,
    usd_per_tco2: f64,
}

/// The gradient-and-hazard core shared by the damage field and the
/// distance curve: every in-bounds window cell of every station gets the
/// dollar value of one extra ton of CO2 emitted there.
fn station_contributions(
    model: &mut ResCnn,
    world: &World,
    sector: ChannelId,
    demography: &DemographyTable,
    gemm: &GemmParams,
    vsl_usd: f64,
    factor: f64,
) -> Result<Vec<Vec<CellContrib>>> {
    gemm.validate()?;
    if !(vsl_usd.is_finite() && vsl_usd >= 0.0) {
        return Err(CoreError::Invalid(format!(
            "value of statistical life must be nonnegative, got {vsl_usd}"
        )));
    }
    let half = model.hyper.half_extent;
    let size = model.hyper.window_size();
    let k = sector.index();
    let c0 = baseline_concentration(model, world)?;
    let pops = demography.station_populations(world)?;
    let mut out = Vec::with_capacity(world.stations.len());
    for (n, station) in world.stations.iter().enumerate() {
        let stack = extract_window(world, station, half)?;
        let norm = normalize_stack(&stack);
        let grad = model.input_gradient(&norm)?;
        let deaths_weight: f64 = demography
            .mortality
            .iter()
            .zip(&pops[n])
            .map(|(m, p)| m * p)
            .sum();
        let base = mean_inverse_rr(c0[n], gemm);
        let mut cells = Vec::with_capacity(size * size);
        for i in 0..size {
            for j in 0..size {
                if !stack.cell_in_bounds(i, j) {
                    continue;
                }
                let g = grad.at3(k, i, j);
                // One unit more energy use raises this station's predicted
                // concentration by g; deaths move by the hazard difference.
                let dm = deaths_weight * (mean_inverse_rr(c0[n] + g, gemm) - base);
                let (r, c) = stack.absolute(i, j);
                cells.push(CellContrib {
                    row: r as usize,
                    col: c as usize,
                    cheb: (i as i64 - half as i64)
                        .abs()
                        .max((j as i64 - half as i64).abs()) as usize,
                    usd_per_tco2: -vsl_usd * dm / factor,
                });
            }
        }
        out.push(cells);
    }
    Ok(out)
}

/// Marginal damages of one sector over the absolute grid: each station's
/// input gradient is converted to avoided-death value and scatter-added at
/// the cell it belongs to, then expressed per ton of CO2.
#[allow(clippy::too_many_arguments)]
pub fn marginal_damage_field(
    model: &mut ResCnn,
    world: &World,
    sector: ChannelId,
    demography: &DemographyTable,
    gemm: &GemmParams,
    vsl_usd: f64,
    factors: &EmissionFactors,
    clamp_nonnegative: bool,
) -> Result<DamageField> {
    let factor = factors.factor(sector)?;
    factors.validate()?;
    let contribs = station_contributions(model, world, sector, demography, gemm, vsl_usd, factor)?;
    let mut md = vec![0.0; world.rows * world.cols];
    let mut covered = vec![false; world.rows * world.cols];
    for cells in &contribs {
        for cell in cells {
            let idx = cell.row * world.cols + cell.col;
            md[idx] += cell.usd_per_tco2;
            covered[idx] = true;
        }
    }
    let negative_cells = md
        .iter()
        .zip(&covered)
        .filter(|(v, c)| **c && **v < 0.0)
        .count();
    if clamp_nonnegative {
        for v in &mut md {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
    }
    Ok(DamageField {
        sector,
        rows: world.rows,
        cols: world.cols,
        emission_factor: factor,
        md,
        covered,
        negative_cells,
        clamped: clamp_nonnegative,
    })
}

/// Total damages of one sector with a regional breakdown.
#[derive(Clone, Debug)]
pub struct DamageSummary {
    pub sector: ChannelId,
    /// Dollars per year over all covered cells.
    pub total: f64,
    /// One entry per region in map order, then an "unmapped" bucket; the
    /// entries sum to `total`.
    pub by_region: Vec<(String, f64)>,
    pub covered_cells: usize,
    /// Cells with sector emissions that no station window reaches; their
    /// damages are unknown, not zero.
    pub emitting_uncovered_cells: usize,
}

/// Sums marginal damages times emissions over the grid:
/// `TD = Σ_ij MD_ij · x_ij · factor`, bucketed by region.
pub fn total_damage(
    field: &DamageField,
    world: &World,
    regions: Option<&RegionMap>,
) -> Result<DamageSummary> {
    if field.rows != world.rows || field.cols != world.cols {
        return Err(CoreError::Invalid(format!(
            "damage field is {}x{} but the world grid is {}x{}",
            field.rows, field.cols, world.rows, world.cols
        )));
    }
    let n_regions = regions.map_or(0, |r| r.names().len());
    let mut buckets = vec![0.0; n_regions + 1]; // last bucket: unmapped
    let mut total = 0.0;
    let mut emitting_uncovered = 0usize;
    for row in 0..world.rows {
        for col in 0..world.cols {
            let x = world.value(field.sector, row, col);
            if !field.covered_at(row, col) {
                if x > 0.0 {
                    emitting_uncovered += 1;
                }
                continue;
            }
            let dollars = field.md_at(row, col) * x * field.emission_factor;
            total += dollars;
            let bucket = regions
                .and_then(|r| r.region_index(row, col))
                .unwrap_or(n_regions);
            buckets[bucket] += dollars;
        }
    }
    let mut by_region = Vec::with_capacity(n_regions + 1);
    if let Some(r) = regions {
        for (name, value) in r.names().iter().zip(&buckets) {
            by_region.push((name.clone(), *value));
        }
    }
    by_region.push(("unmapped".to_string(), buckets[n_regions]));
    Ok(DamageSummary {
        sector: field.sector,
        total,
        by_region,
        covered_cells: field.covered_cells(),
        emitting_uncovered_cells: emitting_uncovered,
    })
}

/// Total damage recomputed with every station's gradient window restricted
/// to centred sub-squares of the given odd edge lengths (in cells).
/// Returns `(edge, dollars)` pairs in the order given.
#[allow(clippy::too_many_arguments)]
pub fn damage_by_distance(
    model: &mut ResCnn,
    world: &World,
    sector: ChannelId,
    edges: &[usize],
    demography: &DemographyTable,
    gemm: &GemmParams,
    vsl_usd: f64,
    factors: &EmissionFactors,
) -> Result<Vec<(usize, f64)>> {
    let size = model.hyper.window_size();
    if edges.is_empty() {
        return Err(CoreError::Invalid("need at least one edge length".into()));
    }
    for e in edges {
        if *e % 2 == 0 || *e == 0 || *e > size {
            return Err(CoreError::Invalid(format!(
                "edge length {e} must be odd and between 1 and the window size {size}"
            )));
        }
    }
    let factor = factors.factor(sector)?;
    let contribs = station_contributions(model, world, sector, demography, gemm, vsl_usd, factor)?;
    let mut out = Vec::with_capacity(edges.len());
    for &edge in edges {
        let reach = (edge - 1) / 2;
        let mut total = 0.0;
        for cells in &contribs {
            for cell in cells {
                if cell.cheb <= reach {
                    total +=
                        cell.usd_per_tco2 * world.value(sector, cell.row, cell.col) * factor;
                }
            }
        }
        out.push((edge, total));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::NUM_CHANNELS;
    use crate::health::testutil::{linear_model, test_world};

    fn demography() -> DemographyTable {
        DemographyTable::new([0.01; 12], [1.0 / 12.0; 12]).unwrap()
    }

    fn factors() -> EmissionFactors {
        EmissionFactors {
            rrc: 2.66,
            idc: 2.66,
            ido: 2.10,
            svc: 2.66,
            trn: 2.10,
        }
    }

    #[test]
    fn vsl_matches_frozen_transfer_value() {
        let config = VslConfig::default();
        let v = vsl(&config).unwrap();
        assert!((v - 1_823_972.6938755652).abs() < 1e-6);
        assert!((v - 1.8e6).abs() < 0.05e6, "headline value within band");
    }

    #[test]
    fn vsl_trivial_limits_and_validation() {
        let mut config = VslConfig::default();
        config.pc_gdp_target = config.pc_gdp_base;
        assert_eq!(vsl(&config).unwrap(), config.base_vsl);
        let mut config = VslConfig::default();
        config.elasticity = 1e-300; // effectively zero, but still positive
        assert!((vsl(&config).unwrap() - config.base_vsl).abs() < 1.0);
        config.base_vsl = -1.0;
        assert!(vsl(&config).is_err());
    }

    #[test]
    fn degenerate_hazard_curve_gives_zero_damage_everywhere() {
        let world = test_world();
        let mut model = linear_model([0.5; NUM_CHANNELS], 30.0, 2);
        let gemm = GemmParams {
            theta_mean: 0.0,
            theta_sd: 0.0,
            ..GemmParams::default()
        };
        let field = marginal_damage_field(
            &mut model,
            &world,
            ChannelId::Idc,
            &demography(),
            &gemm,
            1.8e6,
            &factors(),
            false,
        )
        .unwrap();
        assert!(field.md.iter().all(|v| *v == 0.0));
        assert_eq!(field.negative_cells, 0);
        assert!(field.covered_cells() > 0);
    }

    #[test]
    fn single_station_field_matches_independent_scalar_math() {
        let mut world = test_world();
        world.stations.truncate(1);
        let mut w = [0.0; NUM_CHANNELS];
        w[ChannelId::Idc.index()] = 0.8;
        w[ChannelId::Alt.index()] = 0.3;
        let mut model = linear_model(w, 24.0, 2);
        let gemm = GemmParams::default();
        let demography = demography();
        let vsl_usd = 1.8e6;
        let field = marginal_damage_field(
            &mut model,
            &world,
            ChannelId::Idc,
            &demography,
            &gemm,
            vsl_usd,
            &factors(),
            false,
        )
        .unwrap();

        // Independent evaluation: a linear-only model with identity
        // standardization has gradient w_k / cells at every window cell,
        // and the baseline is w·x̄ + b.
        let station = &world.stations[0];
        let stack = extract_window(&world, station, 2).unwrap();
        let means = stack.channel_means();
        let c0: f64 = w.iter().zip(means).map(|(wk, m)| wk * m).sum::<f64>() + 24.0;
        let g = 0.8 / 25.0;
        let pop_per_group = 2_000_000.0 / 12.0;
        let deaths_weight = 12.0 * 0.01 * pop_per_group;
        let t = |c: f64| {
            let z: f64 = (c - 2.4f64).max(0.0);
            (z / 1.6 + 1.0).ln() / (1.0 + (-(z - 15.5) / 36.8).exp())
        };
        let minv = |c: f64| (-0.1430 * t(c) + 0.5 * (0.01807 * t(c)).powi(2)).exp();
        let expected = -vsl_usd * deaths_weight * (minv(c0 + g) - minv(c0)) / 2.66;

        let mut checked = 0;
        for i in 0..5 {
            for j in 0..5 {
                let (r, c) = stack.absolute(i, j);
                if !stack.cell_in_bounds(i, j) {
                    continue;
                }
                let got = field.md_at(r as usize, c as usize);
                assert!(
                    (got - expected).abs() < 1e-10 * expected.abs().max(1.0),
                    "cell ({r},{c}): {got} vs {expected}"
                );
                checked += 1;
            }
        }
        assert_eq!(checked, 25, "station away from the border covers fully");
        assert!(expected > 0.0, "positive gradient means positive damage");
        // Cells outside the single window are uncovered and zero.
        assert!(!field.covered_at(11, 11));
        assert_eq!(field.md_at(11, 11), 0.0);
        assert_eq!(field.covered_cells(), 25);
    }

    #[test]
    fn negative_gradients_are_counted_and_optionally_clamped() {
        let world = test_world();
        let mut w = [0.0; NUM_CHANNELS];
        // Small negative weight keeps the baseline above the counterfactual
        // while making damage decrease with emissions.
        w[ChannelId::Idc.index()] = -0.01;
        let mut model = linear_model(w, 40.0, 2);
        let raw = marginal_damage_field(
            &mut model,
            &world,
            ChannelId::Idc,
            &demography(),
            &GemmParams::default(),
            1.8e6,
            &factors(),
            false,
        )
        .unwrap();
        assert!(raw.negative_cells > 0);
        assert!(!raw.clamped);
        assert!(raw.md.iter().any(|v| *v < 0.0));

        let mut model = linear_model(w, 40.0, 2);
        // Same field with clamping requested.
        let clamped = marginal_damage_field(
            &mut model,
            &world,
            ChannelId::Idc,
            &demography(),
            &GemmParams::default(),
            1.8e6,
            &factors(),
            true,
        )
        .unwrap();
        assert_eq!(clamped.negative_cells, raw.negative_cells);
        assert!(clamped.clamped);
        assert!(clamped.md.iter().all(|v| *v >= 0.0));
    }

    fn uniform_field(world: &World, sector: ChannelId, md: f64, factor: f64) -> DamageField {
        DamageField {
            sector,
            rows: world.rows,
            cols: world.cols,
            emission_factor: factor,
            md: vec![md; world.rows * world.cols],
            covered: vec![true; world.rows * world.cols],
            negative_cells: 0,
            clamped: false,
        }
    }

    #[test]
    fn total_damage_factorizes_for_uniform_fields() {
        let world = test_world();
        let field = uniform_field(&world, ChannelId::Idc, 3.5, 2.66);
        let summary = total_damage(&field, &world, None).unwrap();
        let tco2 = world.channel_total(ChannelId::Idc) * 2.66;
        assert!((summary.total - 3.5 * tco2).abs() < 1e-9 * summary.total.abs());
        assert_eq!(summary.by_region.len(), 1);
        assert_eq!(summary.by_region[0].0, "unmapped");
        assert!((summary.by_region[0].1 - summary.total).abs() < 1e-12 * summary.total.abs());
        assert_eq!(summary.emitting_uncovered_cells, 0);
    }

    #[test]
    fn total_damage_is_zero_without_emissions_and_linear_in_emissions() {
        let mut world = test_world();
        let field = uniform_field(&world, ChannelId::Trn, 7.0, 2.10);
        let zero = total_damage(&field, &world, None).unwrap();
        assert_eq!(zero.total, 0.0, "fixture has no transport energy use");

        let base = {
            let field = uniform_field(&world, ChannelId::Idc, 7.0, 2.66);
            total_damage(&field, &world, None).unwrap().total
        };
        for r in 0..world.rows {
            for c in 0..world.cols {
                let v = world.value(ChannelId::Idc, r, c);
                world.set_value(ChannelId::Idc, r, c, 3.0 * v);
            }
        }
        let field = uniform_field(&world, ChannelId::Idc, 7.0, 2.66);
        let scaled = total_damage(&field, &world, None).unwrap().total;
        assert!((scaled - 3.0 * base).abs() < 1e-9 * scaled.abs());
    }

    #[test]
    fn regional_buckets_sum_to_the_total() {
        let world = test_world();
        let mut regions = RegionMap::default();
        for r in 0..world.rows {
            for c in 0..world.cols {
                if r < 6 {
                    regions.insert(r, c, "north");
                } else if c < 6 {
                    regions.insert(r, c, "southwest");
                }
                // southeast quadrant left unmapped on purpose
            }
        }
        let field = uniform_field(&world, ChannelId::Idc, 2.0, 2.66);
        let summary = total_damage(&field, &world, Some(&regions)).unwrap();
        assert_eq!(summary.by_region.len(), 3);
        assert_eq!(summary.by_region[0].0, "north");
        assert_eq!(summary.by_region[1].0, "southwest");
        assert_eq!(summary.by_region[2].0, "unmapped");
        let sum: f64 = summary.by_region.iter().map(|(_, v)| v).sum();
        assert!((sum - summary.total).abs() < 1e-9 * summary.total.abs());
        assert!(summary.by_region[2].1 > 0.0, "unmapped cells carry damage");
    }

    #[test]
    fn uncovered_emitting_cells_are_reported_not_zeroed() {
        let mut world = test_world();
        world.stations.truncate(1); // one 5×5 window covers 25 of 144 cells
        let mut w = [0.0; NUM_CHANNELS];
        w[ChannelId::Idc.index()] = 0.8;
        let mut model = linear_model(w, 24.0, 2);
        let field = marginal_damage_field(
            &mut model,
            &world,
            ChannelId::Idc,
            &demography(),
            &GemmParams::default(),
            1.8e6,
            &factors(),
            false,
        )
        .unwrap();
        let summary = total_damage(&field, &world, None).unwrap();
        assert_eq!(summary.covered_cells, 25);
        assert_eq!(summary.emitting_uncovered_cells, 144 - 25);
    }

    #[test]
    fn grid_mismatch_is_rejected() {
        let world = test_world();
        let other = World::new(5, 5, 10.0).unwrap();
        let field = uniform_field(&world, ChannelId::Idc, 1.0, 2.66);
        assert!(total_damage(&field, &other, None).is_err());
    }

    #[test]
    fn distance_curve_closes_on_total_damage_and_is_monotone() {
        let world = test_world();
        let mut w = [0.0; NUM_CHANNELS];
        w[ChannelId::Idc.index()] = 0.8;
        w[ChannelId::Rrc.index()] = 0.2;
        let gemm = GemmParams::default();
        let demography = demography();

        let mut model = linear_model(w, 24.0, 2);
        let field = marginal_damage_field(
            &mut model,
            &world,
            ChannelId::Idc,
            &demography,
            &gemm,
            1.8e6,
            &factors(),
            false,
        )
        .unwrap();
        let total = total_damage(&field, &world, None).unwrap().total;

        let mut model = linear_model(w, 24.0, 2);
        let curve = damage_by_distance(
            &mut model,
            &world,
            ChannelId::Idc,
            &[1, 3, 5],
            &demography,
            &gemm,
            1.8e6,
            &factors(),
        )
        .unwrap();
        assert_eq!(curve.len(), 3);
        assert!((curve[2].1 - total).abs() <= 1e-9 * total.abs(), "closure at the full window");
        assert!(curve[0].1 <= curve[1].1 && curve[1].1 <= curve[2].1);
        assert!(curve[0].1 > 0.0);
    }

    #[test]
    fn distance_edges_are_validated() {
        let world = test_world();
        let demography = demography();
        let gemm = GemmParams::default();
        let mut model = linear_model([0.1; NUM_CHANNELS], 24.0, 2);
        for bad in [vec![], vec![2], vec![7], vec![0]] {
            assert!(
                damage_by_distance(
                    &mut model,
                    &world,
                    ChannelId::Idc,
                    &bad,
                    &demography,
                    &gemm,
                    1.8e6,
                    &factors(),
                )
                .is_err(),
                "{bad:?} must be rejected for a 5-cell window"
            );
        }
    }

    #[test]
    fn geography_sectors_are_rejected() {
        let world = test_world();
        let mut model = linear_model([0.1; NUM_CHANNELS], 24.0, 2);
        assert!(marginal_damage_field(
            &mut model,
            &world,
            ChannelId::Tem,
            &demography(),
            &GemmParams::default(),
            1.8e6,
            &factors(),
            false,
        )
        .is_err());
    }
}
