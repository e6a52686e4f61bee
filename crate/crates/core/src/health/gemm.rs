use rand_distr::{Distribution, Normal};

use crate::error::{CoreError, Result};
use crate::health::config::{DemographyTable, GemmParams};
use crate::rng::stream;

/// Concentration transform T(c) of the hazard-ratio curve:
/// `ln(max(0,c−cf)/α + 1) / (1 + exp(−(max(0,c−cf)−μ)/υ))`.
///
/// Total in c: concentrations at or below the counterfactual (including
/// negative excursions from gradient probes) attribute no risk.
pub fn transform(c: f64, gemm: &GemmParams) -> f64 {
    let z = (c - gemm.cf).max(0.0);
    if z == 0.0 {
        return 0.0;
    }
    (z / gemm.alpha + 1.0).ln() / (1.0 + (-(z - gemm.mu) / gemm.upsilon).exp())
}

/// Hazard ratio RR(c) = exp(θ·T(c)) for one draw of θ.
pub fn hazard_ratio(c: f64, gemm: &GemmParams, theta: f64) -> f64 {
    (theta * transform(c, gemm)).exp()
}

/// E[1/RR(c)] over θ ~ Normal(θ_mean, θ_sd), in closed form: 1/RR is
/// lognormal, so the mean is `exp(−θ_mean·T + (θ_sd·T)²/2)`.
pub fn mean_inverse_rr(c: f64, gemm: &GemmParams) -> f64 {
    let t = transform(c, gemm);
    (-gemm.theta_mean * t + 0.5 * (gemm.theta_sd * t).powi(2)).exp()
}

/// One shared vector of θ draws used for every station of an analysis, so
/// confidence intervals are consistent across stations and independent of
/// evaluation order. θ is a single epidemiological parameter, not a
/// per-station quantity.
pub fn theta_draws(gemm: &GemmParams, n_draws: usize, seed: u64) -> Result<Vec<f64>> {
    if n_draws == 0 {
        return Err(CoreError::Invalid("need at least one draw".into()));
    }
    let normal = Normal::new(gemm.theta_mean, gemm.theta_sd)
        .map_err(|e| CoreError::Config(format!("bad theta distribution: {e}")))?;
    let mut rng = stream(seed, "theta", 0);
    Ok((0..n_draws).map(|_| normal.sample(&mut rng)).collect())
}

/// Mean avoided deaths with a percentile confidence interval.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AvoidedDeaths {
    /// Closed-form mean (not the Monte-Carlo average).
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
}

/// Linear-interpolation percentile of already-sorted values at fraction
/// `q ∈ [0,1]` (position q·(n−1) between order statistics).
pub(crate) fn percentile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

fn ci_bounds(mut totals: Vec<f64>, ci: f64) -> (f64, f64) {
    totals.sort_by(|a, b| a.partial_cmp(b).expect("finite draw totals"));
    let tail = (1.0 - ci) / 2.0;
    (percentile(&totals, tail), percentile(&totals, 1.0 - tail))
}

/// Avoided deaths at one station for a concentration change c0 → c1:
/// `Σ_m M_m·pop_m·(1/RR(c1) − 1/RR(c0))`, positive when c1 < c0.
///
/// The mean uses the closed form; the interval re-evaluates the sum for
/// each θ draw and takes central percentiles at level `ci`.
pub fn avoided_deaths_station(
    c0: f64,
    c1: f64,
    pop: &[f64; 12],
    mortality: &[f64; 12],
    gemm: &GemmParams,
    draws: &[f64],
    ci: f64,
) -> Result<AvoidedDeaths> {
    check_ci(ci)?;
    if draws.is_empty() {
        return Err(CoreError::Invalid("need at least one draw".into()));
    }
    // The age sum factors: the concentration term is age-independent.
    let deaths_weight: f64 = mortality.iter().zip(pop).map(|(m, p)| m * p).sum();
    let mean = deaths_weight * (mean_inverse_rr(c1, gemm) - mean_inverse_rr(c0, gemm));
    let t0 = transform(c0, gemm);
    let t1 = transform(c1, gemm);
    let totals: Vec<f64> = draws
        .iter()
        .map(|theta| deaths_weight * ((-theta * t1).exp() - (-theta * t0).exp()))
        .collect();
    let (lo, hi) = ci_bounds(totals, ci);
    Ok(AvoidedDeaths { mean, lo, hi })
}

fn check_ci(ci: f64) -> Result<()> {
    if ci.is_finite() && 0.0 < ci && ci < 1.0 {
        Ok(())
    } else {
        Err(CoreError::Invalid(format!(
            "confidence level must lie in (0, 1), got {ci}"
        )))
    }
}

/// Avoided deaths per station plus the total across stations. The shared
/// θ draws correlate stations within each draw, so the total's interval
/// reflects that the same curve uncertainty applies everywhere at once.
pub fn avoided_deaths(
    c0: &[f64],
    c1: &[f64],
    pops: &[[f64; 12]],
    demography: &DemographyTable,
    gemm: &GemmParams,
    draws: &[f64],
    ci: f64,
) -> Result<(Vec<AvoidedDeaths>, AvoidedDeaths)> {
    check_ci(ci)?;
    if c0.len() != c1.len() || c0.len() != pops.len() {
        return Err(CoreError::Invalid(format!(
            "mismatched lengths: {} baseline, {} scenario, {} populations",
            c0.len(),
            c1.len(),
            pops.len()
        )));
    }
    if draws.is_empty() {
        return Err(CoreError::Invalid("need at least one draw".into()));
    }
    let mut per_station = Vec::with_capacity(c0.len());
    let mut grand_mean = 0.0;
    let mut totals = vec![0.0; draws.len()];
    for ((b, s), pop) in c0.iter().zip(c1).zip(pops) {
        let deaths_weight: f64 = demography.mortality.iter().zip(pop).map(|(m, p)| m * p).sum();
        let mean = deaths_weight * (mean_inverse_rr(*s, gemm) - mean_inverse_rr(*b, gemm));
        let t0 = transform(*b, gemm);
        let t1 = transform(*s, gemm);
        let mut station_totals = Vec::with_capacity(draws.len());
        for (acc, theta) in totals.iter_mut().zip(draws) {
            let v = deaths_weight * ((-theta * t1).exp() - (-theta * t0).exp());
            station_totals.push(v);
            *acc += v;
        }
        let (lo, hi) = ci_bounds(station_totals, ci);
        per_station.push(AvoidedDeaths { mean, lo, hi });
        grand_mean += mean;
    }
    let (lo, hi) = ci_bounds(totals, ci);
    Ok((
        per_station,
        AvoidedDeaths {
            mean: grand_mean,
            lo,
            hi,
        },
    ))
}
