use crate::error::{CoreError, Result};
use crate::grid::NUM_CHANNELS;
use crate::model::{augment, ChannelStats, ResCnn};
use crate::nn::{Adam, Mode};
use crate::rng::stream;
use crate::tensor::Tensor;
use crate::train::SampleSet;
use rand::seq::SliceRandom;

pub struct TrainReport {
    /// Mean weighted squared error over the training set, one entry per
    /// epoch, from that epoch's own minibatch passes.
    pub epoch_losses: Vec<f64>,
    pub stats: ChannelStats,
}

/// Channel-mean standardization statistics over the training subset. A
/// channel that never varies gets unit spread so it simply contributes a
/// constant to the linear branch.
fn channel_stats(samples: &SampleSet, train_idx: &[usize]) -> ChannelStats {
    let n = train_idx.len() as f64;
    let mut mean = [0.0; NUM_CHANNELS];
    let mut std = [0.0; NUM_CHANNELS];
    for idx in train_idx {
        for k in 0..NUM_CHANNELS {
            mean[k] += samples.means[*idx][k];
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    for idx in train_idx {
        for k in 0..NUM_CHANNELS {
            let d = samples.means[*idx][k] - mean[k];
            std[k] += d * d;
        }
    }
    for s in &mut std {
        *s = (*s / n).sqrt();
        if *s == 0.0 {
            *s = 1.0;
        }
    }
    ChannelStats { mean, std }
}

/// Splits shuffled indices into minibatches. A trailing batch of one is
/// folded into its predecessor so batch statistics stay defined.
fn batch_ranges(n: usize, batch_size: usize) -> Vec<(usize, usize)> {
    let mut ranges = Vec::new();
    let mut start = 0;
    while start < n {
        let end = (start + batch_size).min(n);
        ranges.push((start, end));
        start = end;
    }
    if ranges.len() >= 2 {
        let (last_start, last_end) = *ranges.last().unwrap();
        if last_end - last_start == 1 {
            ranges.pop();
            ranges.last_mut().unwrap().1 = last_end;
        }
    }
    ranges
}

/// Fits the model on the given training subset with Adam over weighted
/// squared error. `weights` is indexed per station like the sample set.
pub fn train_model(
    model: &mut ResCnn,
    samples: &SampleSet,
    train_idx: &[usize],
    weights: &[f64],
    seed: u64,
) -> Result<TrainReport> {
    if train_idx.is_empty() {
        return Err(CoreError::Invalid("training subset is empty".into()));
    }
    if samples.window_size != model.hyper.window_size() {
        return Err(CoreError::Invalid(format!(
            "sample windows span {} cells but the model expects {}",
            samples.window_size,
            model.hyper.window_size()
        )));
    }
    let stats = channel_stats(samples, train_idx);
    model.set_stats(stats.clone());

    let hyper = model.hyper.clone();
    let size = samples.window_size;
    let mut opt = Adam::new(hyper.learning_rate);
    let mut order: Vec<usize> = train_idx.to_vec();
    let mut epoch_losses = Vec::with_capacity(hyper.iterations);
    for epoch in 0..hyper.iterations {
        let mut shuffle_rng = stream(seed, "epoch-shuffle", epoch as u64);
        order.shuffle(&mut shuffle_rng);
        let mut aug_rng = stream(seed, "augment", epoch as u64);
        let mut epoch_sse = 0.0;
        for (start, end) in batch_ranges(order.len(), hyper.batch_size) {
            let batch = &order[start..end];
            let b = batch.len();
            let mut x = Tensor::zeros(&[b, NUM_CHANNELS, size, size]);
            let mut means = Vec::with_capacity(b);
            let plane = NUM_CHANNELS * size * size;
            for (slot, idx) in batch.iter().enumerate() {
                let window = if hyper.augment {
                    augment(&samples.norms[*idx].data, hyper.augment_noise, &mut aug_rng)?
                } else {
                    samples.norms[*idx].data.clone()
                };
                x.data_mut()[slot * plane..(slot + 1) * plane].copy_from_slice(window.data());
                means.push(samples.means[*idx]);
            }
            let preds = model.predict_batch(&x, &means, Mode::Train)?;
            let mut dy = Vec::with_capacity(b);
            let mut batch_sse = 0.0;
            for (slot, idx) in batch.iter().enumerate() {
                let err = samples.targets[*idx] - preds[slot].combined;
                let w = weights[*idx];
                batch_sse += w * err * err;
                dy.push(-2.0 * w * err / b as f64);
            }
            if !batch_sse.is_finite() {
                return Err(CoreError::NonFinite {
                    context: format!("training loss in epoch {epoch}"),
                });
            }
            model.backward(&dy)?;
            opt.step(model)?;
            epoch_sse += batch_sse;
        }
        epoch_losses.push(epoch_sse / order.len() as f64);
    }
    Ok(TrainReport {
        epoch_losses,
        stats,
    })
}

/// Weighted mean squared error of eval-mode predictions on a subset.
pub fn subset_loss(
    model: &mut ResCnn,
    samples: &SampleSet,
    idx: &[usize],
    weights: &[f64],
) -> Result<f64> {
    if idx.is_empty() {
        return Err(CoreError::Invalid("evaluation subset is empty".into()));
    }
    let preds = predict_subset(model, samples, idx)?;
    let mut sse = 0.0;
    for (pred, i) in preds.iter().zip(idx) {
        let err = samples.targets[*i] - pred;
        sse += weights[*i] * err * err;
    }
    Ok(sse / idx.len() as f64)
}

/// Eval-mode combined predictions for a subset of stations.
pub fn predict_subset(model: &mut ResCnn, samples: &SampleSet, idx: &[usize]) -> Result<Vec<f64>> {
    let size = samples.window_size;
    let plane = NUM_CHANNELS * size * size;
    let mut out = Vec::with_capacity(idx.len());
    // Predict in modest chunks to bound peak memory on big windows.
    for chunk in idx.chunks(64) {
        let b = chunk.len();
        let mut x = Tensor::zeros(&[b, NUM_CHANNELS, size, size]);
        let mut means = Vec::with_capacity(b);
        for (slot, i) in chunk.iter().enumerate() {
            x.data_mut()[slot * plane..(slot + 1) * plane]
                .copy_from_slice(samples.norms[*i].data.data());
            means.push(samples.means[*i]);
        }
        for p in model.predict_batch(&x, &means, Mode::Eval)? {
            out.push(p.combined);
        }
    }
    Ok(out)
}
