//! Weighted training, population-weighted evaluation, and hyperparameter
//! search (random sampling, dimension pruning, exhaustive grid).

mod dataset;
mod fit;
mod metrics;
mod search;

pub use dataset::{build_samples, SampleSet};
pub use fit::{predict_subset, subset_loss, train_model, TrainReport};
pub use metrics::{evaluate, EvalMetrics};
pub use search::{
    grid_search, grid_search_with, prune_space, random_search, random_search_with,
    write_trial_log, DeltaRule, DroppedValue, PruneConfig, PruneReport, SearchSpace, Trial,
    TrialContext, TrialStatus,
};
