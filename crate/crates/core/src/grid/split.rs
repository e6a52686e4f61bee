use crate::error::{CoreError, Result};
use crate::rng::stream;
use rand::seq::SliceRandom;

/// Index sets of a train/validation/test partition of the stations.
#[derive(Clone, Debug)]
pub struct DatasetSplit {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl DatasetSplit {
    pub fn len(&self) -> usize {
        self.train.len() + self.val.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Splits `n` stations 3:1:1 into train/validation/test.
///
/// Validation and test each get `round(n / 5)` stations; training gets the
/// remainder. The permutation is a seeded Fisher-Yates shuffle, so a given
/// `(n, seed)` pair always yields the same partition.
pub fn split_dataset(n: usize, seed: u64) -> Result<DatasetSplit> {
    if n < 5 {
        return Err(CoreError::Invalid(format!(
            "need at least 5 stations to split 3:1:1, got {n}"
        )));
    }
    let side = (n as f64 / 5.0).round() as usize;
    let train_n = n - 2 * side;
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = stream(seed, "dataset-split", 0);
    order.shuffle(&mut rng);
    let val = order[train_n..train_n + side].to_vec();
    let test = order[train_n + side..].to_vec();
    let mut train = order;
    train.truncate(train_n);
    Ok(DatasetSplit { train, val, test })
}
