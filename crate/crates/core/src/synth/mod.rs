//! Synthetic worlds with a known dispersion kernel.
//!
//! The generator builds landscapes whose station observations follow an
//! exponential-decay ground truth, so every downstream quantity — model
//! fit, input gradients, marginal damages, distance profiles — can be
//! compared against closed-form oracle values. The kernel is stored as a
//! TOML sidecar next to the world files, keeping a generated world
//! re-checkable long after generation.

mod generate;
mod kernel;
mod oracle;

pub use generate::{generate_region_map, generate_world, GenConfig, ADULT_AGE_SHARES};
pub use kernel::{load_kernel, save_kernel, OracleKernel, KERNEL_FILE};
pub use oracle::{
    oracle_concentration, oracle_damage_field, oracle_marginal, set_station_observations,
};
