use std::fmt::Display;
use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::grid::{DatasetSplit, World};
use crate::model::{build_model, HyperParams};
use crate::rng::{derive_seed, stream};
use crate::train::{build_samples, subset_loss, train_model};

/// Candidate values per hyperparameter dimension. Field order matches
/// [`HyperParams`] and fixes both the sampling order and the grid
/// enumeration order (first field outermost, last field fastest).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSpace {
    pub iterations: Vec<usize>,
    pub batch_size: Vec<usize>,
    pub conv_layers: Vec<usize>,
    pub filters: Vec<usize>,
    pub conv_kernel: Vec<usize>,
    pub conv_stride: Vec<usize>,
    pub pool_kernel: Vec<usize>,
    pub pool_stride: Vec<usize>,
    pub dropout: Vec<bool>,
    pub dropout_rate: Vec<f64>,
    pub batchnorm: Vec<bool>,
    pub fc_layers: Vec<usize>,
    pub fc_width: Vec<usize>,
    pub augment: Vec<bool>,
    pub augment_noise: Vec<f64>,
    pub learning_rate: Vec<f64>,
    pub half_extent: Vec<usize>,
}

impl Default for SearchSpace {
    /// The full searched space: every architectural and training dimension
    /// is open, while the learning rate and window extent stay fixed unless
    /// a configuration widens them.
    fn default() -> SearchSpace {
        SearchSpace {
            iterations: vec![100, 300, 500],
            batch_size: vec![20, 50, 100, 200],
            conv_layers: vec![1, 2, 3, 4, 5],
            filters: vec![20, 50, 80, 100],
            conv_kernel: vec![2, 3, 4, 5, 6],
            conv_stride: vec![1, 2],
            pool_kernel: vec![2, 3, 4, 5, 6],
            pool_stride: vec![1, 2],
            dropout: vec![true, false],
            dropout_rate: vec![0.0, 0.1, 0.2, 0.5],
            batchnorm: vec![true, false],
            fc_layers: vec![1, 2, 3],
            fc_width: vec![50, 100, 200],
            augment: vec![true, false],
            augment_noise: vec![0.05, 0.1, 0.2],
            learning_rate: vec![1e-3],
            half_extent: vec![10],
        }
    }
}

const DIMS: usize = 17;

impl SearchSpace {
    fn lens(&self) -> [usize; DIMS] {
        [
            self.iterations.len(),
            self.batch_size.len(),
            self.conv_layers.len(),
            self.filters.len(),
            self.conv_kernel.len(),
            self.conv_stride.len(),
            self.pool_kernel.len(),
            self.pool_stride.len(),
            self.dropout.len(),
            self.dropout_rate.len(),
            self.batchnorm.len(),
            self.fc_layers.len(),
            self.fc_width.len(),
            self.augment.len(),
            self.augment_noise.len(),
            self.learning_rate.len(),
            self.half_extent.len(),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let names = dim_names();
        for (len, name) in self.lens().iter().zip(names) {
            if *len == 0 {
                return Err(CoreError::Config(format!(
                    "search dimension '{name}' has no candidate values"
                )));
            }
        }
        Ok(())
    }

    /// Number of grid combinations.
    pub fn cardinality(&self) -> usize {
        self.lens().iter().product()
    }

    /// One independent uniform draw per dimension, in field order.
    pub fn sample(&self, rng: &mut impl Rng) -> HyperParams {
        HyperParams {
            iterations: self.iterations[rng.gen_range(0..self.iterations.len())],
            batch_size: self.batch_size[rng.gen_range(0..self.batch_size.len())],
            conv_layers: self.conv_layers[rng.gen_range(0..self.conv_layers.len())],
            filters: self.filters[rng.gen_range(0..self.filters.len())],
            conv_kernel: self.conv_kernel[rng.gen_range(0..self.conv_kernel.len())],
            conv_stride: self.conv_stride[rng.gen_range(0..self.conv_stride.len())],
            pool_kernel: self.pool_kernel[rng.gen_range(0..self.pool_kernel.len())],
            pool_stride: self.pool_stride[rng.gen_range(0..self.pool_stride.len())],
            dropout: self.dropout[rng.gen_range(0..self.dropout.len())],
            dropout_rate: self.dropout_rate[rng.gen_range(0..self.dropout_rate.len())],
            batchnorm: self.batchnorm[rng.gen_range(0..self.batchnorm.len())],
            fc_layers: self.fc_layers[rng.gen_range(0..self.fc_layers.len())],
            fc_width: self.fc_width[rng.gen_range(0..self.fc_width.len())],
            augment: self.augment[rng.gen_range(0..self.augment.len())],
            augment_noise: self.augment_noise[rng.gen_range(0..self.augment_noise.len())],
            learning_rate: self.learning_rate[rng.gen_range(0..self.learning_rate.len())],
            half_extent: self.half_extent[rng.gen_range(0..self.half_extent.len())],
        }
    }

    /// The `idx`-th combination in lexicographic order.
    pub fn nth(&self, idx: usize) -> Result<HyperParams> {
        if idx >= self.cardinality() {
            return Err(CoreError::Invalid(format!(
                "combination {idx} out of range for a {}-point grid",
                self.cardinality()
            )));
        }
        let lens = self.lens();
        let mut pos = [0usize; DIMS];
        let mut rest = idx;
        for i in (0..DIMS).rev() {
            pos[i] = rest % lens[i];
            rest /= lens[i];
        }
        Ok(HyperParams {
            iterations: self.iterations[pos[0]],
            batch_size: self.batch_size[pos[1]],
            conv_layers: self.conv_layers[pos[2]],
            filters: self.filters[pos[3]],
            conv_kernel: self.conv_kernel[pos[4]],
            conv_stride: self.conv_stride[pos[5]],
            pool_kernel: self.pool_kernel[pos[6]],
            pool_stride: self.pool_stride[pos[7]],
            dropout: self.dropout[pos[8]],
            dropout_rate: self.dropout_rate[pos[9]],
            batchnorm: self.batchnorm[pos[10]],
            fc_layers: self.fc_layers[pos[11]],
            fc_width: self.fc_width[pos[12]],
            augment: self.augment[pos[13]],
            augment_noise: self.augment_noise[pos[14]],
            learning_rate: self.learning_rate[pos[15]],
            half_extent: self.half_extent[pos[16]],
        })
    }
}

fn dim_names() -> [&'static str; DIMS] {
    [
        "iterations",
        "batch_size",
        "conv_layers",
        "filters",
        "conv_kernel",
        "conv_stride",
        "pool_kernel",
        "pool_stride",
        "dropout",
        "dropout_rate",
        "batchnorm",
        "fc_layers",
        "fc_width",
        "augment",
        "augment_noise",
        "learning_rate",
        "half_extent",
    ]
}

#[derive(Clone, Debug, PartialEq)]
pub enum TrialStatus {
    Ok,
    Failed(String),
}

/// One evaluated configuration. Failed trials keep an infinite objective,
/// so they lose every comparison but stay in the record.
#[derive(Clone, Debug)]
pub struct Trial {
    pub index: usize,
    pub hyper: HyperParams,
    pub seed: u64,
    pub objective: f64,
    pub status: TrialStatus,
}

/// Everything a trial needs besides its hyperparameters. The split and the
/// station weights stay fixed across all trials of a search.
pub struct TrialContext<'a> {
    pub world: &'a World,
    pub split: &'a DatasetSplit,
    pub weights: &'a [f64],
}

impl TrialContext<'_> {
    /// Trains one configuration and scores it by weighted squared error on
    /// the validation stations.
    pub fn run_trial(&self, hyper: &HyperParams, seed: u64) -> Result<f64> {
        let samples = build_samples(self.world, hyper.half_extent)?;
        let mut model = build_model(hyper, seed)?;
        train_model(&mut model, &samples, &self.split.train, self.weights, seed)?;
        subset_loss(&mut model, &samples, &self.split.val, self.weights)
    }
}

fn run_all<F>(jobs: Vec<(usize, HyperParams, u64)>, eval: F) -> Vec<Trial>
where
    F: Fn(usize, &HyperParams, u64) -> Result<f64> + Sync,
{
    jobs.into_par_iter()
        .map(|(index, hyper, seed)| match eval(index, &hyper, seed) {
            Ok(objective) => Trial {
                index,
                hyper,
                seed,
                objective,
                status: TrialStatus::Ok,
            },
            Err(e) => Trial {
                index,
                hyper,
                seed,
                objective: f64::INFINITY,
                status: TrialStatus::Failed(e.to_string()),
            },
        })
        .collect()
}

/// Independently samples and scores `n_trials` configurations. The
/// evaluation order is parallel but the result order and all seeds are
/// fully determined by `master_seed`.
pub fn random_search_with<F>(
    space: &SearchSpace,
    n_trials: usize,
    master_seed: u64,
    eval: F,
) -> Result<Vec<Trial>>
where
    F: Fn(usize, &HyperParams, u64) -> Result<f64> + Sync,
{
    space.validate()?;
    if n_trials == 0 {
        return Err(CoreError::Invalid("need at least one trial".into()));
    }
    let jobs: Vec<(usize, HyperParams, u64)> = (0..n_trials)
        .map(|i| {
            let mut rng = stream(master_seed, "trial", i as u64);
            (
                i,
                space.sample(&mut rng),
                derive_seed(master_seed, "trial-train", i as u64),
            )
        })
        .collect();
    Ok(run_all(jobs, eval))
}

pub fn random_search(
    ctx: &TrialContext<'_>,
    space: &SearchSpace,
    n_trials: usize,
    master_seed: u64,
) -> Result<Vec<Trial>> {
    random_search_with(space, n_trials, master_seed, |_, hyper, seed| {
        ctx.run_trial(hyper, seed)
    })
}

/// Exhaustively scores every combination and returns the winner's index
/// into the returned trial list. Ties go to the lexicographically first
/// combination.
pub fn grid_search_with<F>(
    space: &SearchSpace,
    master_seed: u64,
    eval: F,
) -> Result<(usize, Vec<Trial>)>
where
    F: Fn(usize, &HyperParams, u64) -> Result<f64> + Sync,
{
    space.validate()?;
    let n = space.cardinality();
    let jobs: Vec<(usize, HyperParams, u64)> = (0..n)
        .map(|i| {
            Ok((
                i,
                space.nth(i)?,
                derive_seed(master_seed, "grid-train", i as u64),
            ))
        })
        .collect::<Result<_>>()?;
    let trials = run_all(jobs, eval);
    let mut best: Option<usize> = None;
    for t in &trials {
        if t.objective.is_finite() && best.map_or(true, |b| t.objective < trials[b].objective) {
            best = Some(t.index);
        }
    }
    match best {
        Some(b) => Ok((b, trials)),
        None => Err(CoreError::Invalid(
            "every grid combination failed to train".into(),
        )),
    }
}

pub fn grid_search(
    ctx: &TrialContext<'_>,
    space: &SearchSpace,
    master_seed: u64,
) -> Result<(usize, Vec<Trial>)> {
    grid_search_with(space, master_seed, |_, hyper, seed| {
        ctx.run_trial(hyper, seed)
    })
}

/// How far a value's mean objective may sit above the best value's mean
/// before the value is discarded.
#[derive(Clone, Copy, Debug)]
pub enum DeltaRule {
    /// Allowance is `fraction * |best mean|`.
    RelativeToBest(f64),
    Absolute(f64),
}

#[derive(Clone, Copy, Debug)]
pub struct PruneConfig {
    pub delta: DeltaRule,
    /// A value is discarded when its objective variance exceeds `kappa`
    /// times the smallest variance in the same dimension.
    pub kappa: f64,
}

impl Default for PruneConfig {
    fn default() -> PruneConfig {
        PruneConfig {
            delta: DeltaRule::RelativeToBest(0.05),
            kappa: 2.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct DroppedValue {
    pub dimension: String,
    pub value: String,
    pub reason: String,
}

#[derive(Clone, Debug)]
pub struct PruneReport {
    pub space: SearchSpace,
    pub dropped: Vec<DroppedValue>,
}

fn prune_dim<T: PartialEq + Clone + Display>(
    name: &str,
    values: &mut Vec<T>,
    get: impl Fn(&HyperParams) -> T,
    trials: &[Trial],
    config: &PruneConfig,
    dropped: &mut Vec<DroppedValue>,
) -> Result<()> {
    if values.len() <= 1 {
        return Ok(());
    }
    struct ValueStats {
        mean: Option<f64>,
        var: Option<f64>,
    }
    let stats: Vec<ValueStats> = values
        .iter()
        .map(|v| {
            let objs: Vec<f64> = trials
                .iter()
                .filter(|t| t.objective.is_finite() && get(&t.hyper) == *v)
                .map(|t| t.objective)
                .collect();
            if objs.is_empty() {
                return ValueStats {
                    mean: None,
                    var: None,
                };
            }
            let n = objs.len() as f64;
            let mean = objs.iter().sum::<f64>() / n;
            let var = if objs.len() >= 2 {
                Some(objs.iter().map(|o| (o - mean) * (o - mean)).sum::<f64>() / n)
            } else {
                None
            };
            ValueStats {
                mean: Some(mean),
                var,
            }
        })
        .collect();
    let best_mean = stats
        .iter()
        .filter_map(|s| s.mean)
        .fold(f64::INFINITY, f64::min);
    if !best_mean.is_finite() {
        return Err(CoreError::Invalid(format!(
            "no successful trial covers any value of dimension '{name}'"
        )));
    }
    let delta = match config.delta {
        DeltaRule::RelativeToBest(f) => f * best_mean.abs(),
        DeltaRule::Absolute(a) => a,
    };
    let min_var = stats
        .iter()
        .filter_map(|s| s.var)
        .fold(f64::INFINITY, f64::min);
    let best_vi = stats
        .iter()
        .position(|s| s.mean == Some(best_mean))
        .expect("a value attains the best mean");
    let mut kept = Vec::with_capacity(values.len());
    for (vi, value) in values.iter().enumerate() {
        let reason = if vi == best_vi {
            None // the best value always survives
        } else {
            match &stats[vi] {
                // Without trials neither rule can judge the value.
                ValueStats { mean: None, .. } => None,
                ValueStats {
                    mean: Some(mean), ..
                } if *mean > best_mean + delta => Some(format!(
                    "mean objective {mean} exceeds best {best_mean} by more than {delta}"
                )),
                ValueStats { var: Some(var), .. }
                    if min_var.is_finite() && *var > config.kappa * min_var =>
                {
                    Some(format!(
                        "objective variance {var} exceeds {} times the dimension minimum {min_var}",
                        config.kappa
                    ))
                }
                _ => None,
            }
        };
        match reason {
            None => kept.push(value.clone()),
            Some(reason) => dropped.push(DroppedValue {
                dimension: name.to_string(),
                value: format!("{value}"),
                reason,
            }),
        }
    }
    *values = kept;
    Ok(())
}

/// Discards per-dimension values whose trials scored clearly worse or far
/// less consistently than the dimension's best value. The best value of
/// each dimension is always retained, so the result is never empty.
pub fn prune_space(
    space: &SearchSpace,
    trials: &[Trial],
    config: &PruneConfig,
) -> Result<PruneReport> {
    if !trials.iter().any(|t| t.objective.is_finite()) {
        return Err(CoreError::Invalid(
            "cannot prune: no trial finished successfully".into(),
        ));
    }
    let mut pruned = space.clone();
    let mut dropped = Vec::new();
    prune_dim("iterations", &mut pruned.iterations, |h| h.iterations, trials, config, &mut dropped)?;
    prune_dim("batch_size", &mut pruned.batch_size, |h| h.batch_size, trials, config, &mut dropped)?;
    prune_dim("conv_layers", &mut pruned.conv_layers, |h| h.conv_layers, trials, config, &mut dropped)?;
    prune_dim("filters", &mut pruned.filters, |h| h.filters, trials, config, &mut dropped)?;
    prune_dim("conv_kernel", &mut pruned.conv_kernel, |h| h.conv_kernel, trials, config, &mut dropped)?;
    prune_dim("conv_stride", &mut pruned.conv_stride, |h| h.conv_stride, trials, config, &mut dropped)?;
    prune_dim("pool_kernel", &mut pruned.pool_kernel, |h| h.pool_kernel, trials, config, &mut dropped)?;
    prune_dim("pool_stride", &mut pruned.pool_stride, |h| h.pool_stride, trials, config, &mut dropped)?;
    prune_dim("dropout", &mut pruned.dropout, |h| h.dropout, trials, config, &mut dropped)?;
    prune_dim("dropout_rate", &mut pruned.dropout_rate, |h| h.dropout_rate, trials, config, &mut dropped)?;
    prune_dim("batchnorm", &mut pruned.batchnorm, |h| h.batchnorm, trials, config, &mut dropped)?;
    prune_dim("fc_layers", &mut pruned.fc_layers, |h| h.fc_layers, trials, config, &mut dropped)?;
    prune_dim("fc_width", &mut pruned.fc_width, |h| h.fc_width, trials, config, &mut dropped)?;
    prune_dim("augment", &mut pruned.augment, |h| h.augment, trials, config, &mut dropped)?;
    prune_dim("augment_noise", &mut pruned.augment_noise, |h| h.augment_noise, trials, config, &mut dropped)?;
    prune_dim("learning_rate", &mut pruned.learning_rate, |h| h.learning_rate, trials, config, &mut dropped)?;
    prune_dim("half_extent", &mut pruned.half_extent, |h| h.half_extent, trials, config, &mut dropped)?;
    Ok(PruneReport {
        space: pruned,
        dropped,
    })
}

/// CSV record of a finished search. Wall-clock timings deliberately stay
/// out so reruns of the same seed produce identical bytes.
pub fn write_trial_log(path: &Path, trials: &[Trial]) -> Result<()> {
    let mut out = String::from(
        "trial,status,objective,iterations,batch_size,conv_layers,filters,conv_kernel,\
         conv_stride,pool_kernel,pool_stride,dropout,dropout_rate,batchnorm,fc_layers,\
         fc_width,augment,augment_noise,learning_rate,half_extent\n",
    );
    for t in trials {
        let status = match &t.status {
            TrialStatus::Ok => "ok".to_string(),
            TrialStatus::Failed(msg) => format!("failed: {}", msg.replace(',', ";")),
        };
        let h = &t.hyper;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            t.index,
            status,
            t.objective,
            h.iterations,
            h.batch_size,
            h.conv_layers,
            h.filters,
            h.conv_kernel,
            h.conv_stride,
            h.pool_kernel,
            h.pool_stride,
            h.dropout,
            h.dropout_rate,
            h.batchnorm,
            h.fc_layers,
            h.fc_width,
            h.augment,
            h.augment_noise,
            h.learning_rate,
            h.half_extent
        );
    }
    std::fs::write(path, out).map_err(|e| CoreError::io(path, e))
}
