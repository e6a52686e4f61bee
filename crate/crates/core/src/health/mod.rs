//! Concentration-response health math and damage accounting: hazard-ratio
//! curves with uncertainty, avoided deaths, curtailment scenarios,
//! gradient-based marginal damages, and sector/region aggregation.

mod config;
mod damage;
mod gemm;
mod scenario;

pub use config::{
    default_sweep_fractions, load_demography, load_region_map, DemographyTable, EmissionFactors,
    GemmParams, RegionMap, Scenario, VslConfig,
};
pub use damage::{
    damage_by_distance, marginal_damage_field, total_damage, vsl, DamageField, DamageSummary,
};
pub use gemm::{
    avoided_deaths, avoided_deaths_station, hazard_ratio, mean_inverse_rr, theta_draws, transform,
    AvoidedDeaths,
};
pub use scenario::{baseline_concentration, curtailment_sweep, scenario_concentration, SweepRow};
