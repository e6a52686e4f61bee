//! A trained model on disk: `model.bin` (tensor checkpoint) plus
//! `model.toml` (hyperparameters, standardization statistics, seeds).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::model::{build_model, ChannelStats, HyperParams, ResCnn};
use crate::nn::{load_tensors, save_tensors};

pub const BUNDLE_META: &str = "model.toml";
pub const BUNDLE_WEIGHTS: &str = "model.bin";

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BundleMeta {
    /// Seed that produced the train/validation/test split.
    pub split_seed: u64,
    /// Seed that initialized and trained the weights.
    pub train_seed: u64,
    pub hyper: HyperParams,
    pub stats: ChannelStats,
}

/// Writes the bundle into `dir`. Refuses models without standardization
/// statistics, since they cannot predict.
pub fn save_bundle(dir: &Path, model: &ResCnn, split_seed: u64, train_seed: u64) -> Result<()> {
    let stats = model
        .stats()
        .ok_or_else(|| {
            CoreError::Invalid("refusing to save a model without channel statistics".into())
        })?
        .clone();
    fs::create_dir_all(dir).map_err(|e| CoreError::io(dir, e))?;
    let meta = BundleMeta {
        split_seed,
        train_seed,
        hyper: model.hyper.clone(),
        stats,
    };
    let text = toml::to_string_pretty(&meta)
        .map_err(|e| CoreError::Invalid(format!("cannot serialize bundle metadata: {e}")))?;
    let meta_path = dir.join(BUNDLE_META);
    fs::write(&meta_path, text).map_err(|e| CoreError::io(&meta_path, e))?;
    save_tensors(&dir.join(BUNDLE_WEIGHTS), &model.state())
}

/// Rebuilds a model from a bundle directory.
pub fn load_bundle(dir: &Path) -> Result<(ResCnn, BundleMeta)> {
    let meta_path = dir.join(BUNDLE_META);
    let text = fs::read_to_string(&meta_path).map_err(|e| CoreError::io(&meta_path, e))?;
    let meta: BundleMeta = toml::from_str(&text).map_err(|e| {
        CoreError::schema(BUNDLE_META, 1, format!("cannot parse bundle metadata: {e}"))
    })?;
    let mut model = build_model(&meta.hyper, meta.train_seed)?;
    model.set_stats(meta.stats.clone());
    let entries = load_tensors(&dir.join(BUNDLE_WEIGHTS))?;
    model.load_state(&entries)?;
    Ok((model, meta))
}
