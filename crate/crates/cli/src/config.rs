use std::path::{Path, PathBuf};

use airgrad_core::grid::ChannelId;
use airgrad_core::health::{EmissionFactors, GemmParams, VslConfig};
use airgrad_core::model::HyperParams;
use airgrad_core::synth::{GenConfig, OracleKernel};
use airgrad_core::train::{DeltaRule, PruneConfig, SearchSpace};
use airgrad_core::{CoreError, Result};
use serde::Deserialize;

/// Loads a subcommand config, or its defaults when no path is given.
pub fn load_config<T: serde::de::DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CoreError::io(p, e))?;
            toml::from_str(&text)
                .map_err(|e| CoreError::Config(format!("cannot parse {}: {e}", p.display())))
        }
    }
}

/// Resolves a path that may come from a flag (wins) or the config file.
pub fn require_path(
    flag: Option<&PathBuf>,
    config: Option<&PathBuf>,
    what: &str,
    key: &str,
) -> Result<PathBuf> {
    flag.or(config).cloned().ok_or_else(|| {
        CoreError::Config(format!(
            "{what} is required: pass --{key} or set `{} = \"...\"` in the config",
            key.replace('-', "_")
        ))
    })
}

/// Parses a channel name and insists it is an emission sector.
pub fn parse_sector(name: &str) -> Result<ChannelId> {
    let id = ChannelId::parse(name)
        .map_err(|e| CoreError::Config(format!("bad sector '{name}': {e}")))?;
    if !id.is_emission() {
        return Err(CoreError::Config(format!(
            "{} is a geography channel; pick an emission sector",
            id.name()
        )));
    }
    Ok(id)
}

/// Expands a sector argument: a single emission channel, or `all`.
pub fn parse_sectors(name: &str) -> Result<Vec<ChannelId>> {
    if name.eq_ignore_ascii_case("all") {
        Ok(ChannelId::ALL
            .into_iter()
            .filter(|c| c.is_emission())
            .collect())
    } else {
        Ok(vec![parse_sector(name)?])
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenWorldConfig {
    pub seed: u64,
    /// Regions in the generated nearest-centre partition.
    pub regions: usize,
    pub world: GenConfig,
    pub kernel: OracleKernel,
}

impl Default for GenWorldConfig {
    fn default() -> Self {
        GenWorldConfig {
            seed: 7,
            regions: 7,
            world: GenConfig::default(),
            kernel: OracleKernel::default(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub world_dir: Option<PathBuf>,
    pub split_seed: u64,
    pub train_seed: u64,
    pub hyper: HyperParams,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            world_dir: None,
            split_seed: 17,
            train_seed: 23,
            hyper: HyperParams::default(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    pub world_dir: Option<PathBuf>,
    pub split_seed: u64,
    pub master_seed: u64,
    /// Random trials before pruning.
    pub trials: usize,
    /// Exhaustively score the pruned space after the random stage.
    pub then_grid: bool,
    pub space: SearchSpace,
    pub prune: PruneSettings,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            world_dir: None,
            split_seed: 17,
            master_seed: 29,
            trials: 40,
            then_grid: false,
            space: SearchSpace::default(),
            prune: PruneSettings::default(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PruneSettings {
    /// `relative`: delta is a fraction of the best value mean;
    /// `absolute`: delta is in objective units.
    pub rule: String,
    pub delta: f64,
    /// Variance-rule multiplier over the smallest per-value variance.
    pub kappa: f64,
}

impl Default for PruneSettings {
    fn default() -> Self {
        PruneSettings {
            rule: "relative".to_string(),
            delta: 0.05,
            kappa: 2.0,
        }
    }
}

impl PruneSettings {
    pub fn to_prune_config(&self) -> Result<PruneConfig> {
        let delta = match self.rule.as_str() {
            "relative" => DeltaRule::RelativeToBest(self.delta),
            "absolute" => DeltaRule::Absolute(self.delta),
            other => {
                return Err(CoreError::Config(format!(
                    "prune rule must be 'relative' or 'absolute', got '{other}'"
                )))
            }
        };
        Ok(PruneConfig {
            delta,
            kappa: self.kappa,
        })
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    pub world_dir: Option<PathBuf>,
    pub model_dir: Option<PathBuf>,
    /// Defaults to the split seed recorded in the model bundle.
    pub split_seed: Option<u64>,
}

/// One schema shared by all four analysis subcommands (scenario-sweep,
/// md-map, total-damage, distance-curve), so a single file can drive a
/// whole analysis; each subcommand reads the fields it needs.
#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HealthConfig {
    pub world_dir: Option<PathBuf>,
    pub model_dir: Option<PathBuf>,
    pub mortality: Option<PathBuf>,
    /// One emission sector, or `all` (sweeps and curves need one).
    pub sector: String,
    /// Largest curtailment fraction of the sweep.
    pub p_max: f64,
    /// Curtailment step of the sweep.
    pub p_step: f64,
    /// Monte-Carlo draws for the avoided-death confidence interval.
    pub draws: usize,
    pub ci: f64,
    /// Seed of the hazard-ratio uncertainty draws.
    pub seed: u64,
    /// Zero out negative marginal-damage cells in the written maps.
    pub clamp_negative: bool,
    /// Region map CSV for the total-damage breakdown.
    pub regions: Option<PathBuf>,
    /// Odd window edge lengths (cells) for the distance curve; empty means
    /// every odd edge up to the model window.
    pub edges: Vec<usize>,
    pub gemm: GemmParams,
    pub vsl: VslConfig,
    /// tCO2 per tce by sector; mandatory for damage valuation.
    pub factors: Option<EmissionFactors>,
}

impl Default for HealthConfig {
    fn default() -> Self {
        HealthConfig {
            world_dir: None,
            model_dir: None,
            mortality: None,
            sector: "all".to_string(),
            p_max: 0.20,
            p_step: 0.02,
            draws: 1000,
            ci: 0.95,
            seed: 101,
            clamp_negative: false,
            regions: None,
            edges: Vec::new(),
            gemm: GemmParams::default(),
            vsl: VslConfig::default(),
            factors: None,
        }
    }
}

impl HealthConfig {
    /// The curtailment ladder `p_step, 2·p_step, …, p_max`.
    pub fn fractions(&self, p_max: f64, p_step: f64) -> Result<Vec<f64>> {
        if !(p_step > 0.0 && p_step.is_finite()) {
            return Err(CoreError::Config(format!(
                "p_step must be positive, got {p_step}"
            )));
        }
        if !(p_max >= p_step && p_max <= 1.0) {
            return Err(CoreError::Config(format!(
                "p_max must lie in [p_step, 1], got {p_max}"
            )));
        }
        let n = (p_max / p_step).round();
        if (n * p_step - p_max).abs() > 1e-9 {
            return Err(CoreError::Config(format!(
                "p_max {p_max} is not a whole number of steps of {p_step}"
            )));
        }
        Ok((1..=n as usize).map(|i| i as f64 * p_step).collect())
    }

    pub fn factors(&self) -> Result<&EmissionFactors> {
        self.factors.as_ref().ok_or_else(|| {
            CoreError::Config(
                "emission factors are required: add a [factors] table with \
                 rrc, idc, ido, svc and trn in tCO2 per tce"
                    .to_string(),
            )
        })
    }
}
