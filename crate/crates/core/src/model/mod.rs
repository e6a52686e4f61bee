//! The hybrid concentration model: a convolutional branch over the
//! normalized window plus a linear branch over standardized channel means,
//! summed into one scalar prediction with no output activation.

mod augment;
mod bundle;
mod hyper;

pub use augment::augment;
pub use bundle::{load_bundle, save_bundle, BundleMeta};
pub use hyper::HyperParams;

use crate::error::{CoreError, Result};
use crate::grid::{NormalizedStack, NUM_CHANNELS};
use crate::nn::{
    BatchNorm2d, Conv2d, Dense, Dropout, Flatten, Layer, MaxPool2d, Mode, ParamSet, ParamSlot,
    Relu, Sequential,
};
use crate::rng::{derive_seed, stream};
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};

/// Training-set statistics used to standardize the linear branch's inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub mean: [f64; NUM_CHANNELS],
    pub std: [f64; NUM_CHANNELS],
}

/// One prediction split into its two additive parts.
#[derive(Clone, Copy, Debug)]
pub struct Prediction {
    pub combined: f64,
    pub cnn: f64,
    pub linear: f64,
}

pub struct ResCnn {
    pub hyper: HyperParams,
    /// Convolutional branch; empty when `conv_layers == 0`.
    cnn: Sequential,
    /// Linear branch: one dense layer on the standardized channel means.
    linear: Dense,
    stats: Option<ChannelStats>,
}

/// Constructs an untrained model. Layer shapes are validated against the
/// configured window size, so impossible configurations fail here with the
/// offending layer named.
pub fn build_model(hyper: &HyperParams, seed: u64) -> Result<ResCnn> {
    hyper.validate()?;
    let size = hyper.window_size();
    let mut rng = stream(seed, "init", 0);
    let mut layers: Vec<Box<dyn Layer>> = Vec::new();
    let mut shape = vec![1, NUM_CHANNELS, size, size];
    let mut push = |layer: Box<dyn Layer>, shape: &mut Vec<usize>| -> Result<()> {
        *shape = layer.output_shape(shape)?;
        layers.push(layer);
        Ok(())
    };
    if hyper.conv_layers > 0 {
        let mut in_c = NUM_CHANNELS;
        for i in 1..=hyper.conv_layers {
            push(
                Box::new(Conv2d::new(
                    format!("conv{i}"),
                    in_c,
                    hyper.filters,
                    hyper.conv_kernel,
                    hyper.conv_stride,
                    &mut rng,
                )?),
                &mut shape,
            )?;
            if hyper.batchnorm {
                push(Box::new(BatchNorm2d::new(format!("bn{i}"), hyper.filters)?), &mut shape)?;
            }
            push(Box::new(Relu::new(format!("relu{i}"))), &mut shape)?;
            push(
                Box::new(MaxPool2d::new(
                    format!("pool{i}"),
                    hyper.pool_kernel,
                    hyper.pool_stride,
                )?),
                &mut shape,
            )?;
            in_c = hyper.filters;
        }
        push(Box::new(Flatten::new("flatten")), &mut shape)?;
        let mut width = shape[1];
        for j in 1..=hyper.fc_layers {
            push(
                Box::new(Dense::new(format!("fc{j}"), width, hyper.fc_width, &mut rng)?),
                &mut shape,
            )?;
            push(Box::new(Relu::new(format!("fcrelu{j}"))), &mut shape)?;
            if hyper.dropout {
                push(
                    Box::new(Dropout::new(
                        format!("drop{j}"),
                        hyper.dropout_rate,
                        derive_seed(seed, "dropout", j as u64),
                    )?),
                    &mut shape,
                )?;
            }
            width = hyper.fc_width;
        }
        push(Box::new(Dense::new("head", width, 1, &mut rng)?), &mut shape)?;
    }
    let linear = Dense::new("linear", NUM_CHANNELS, 1, &mut rng)?;
    Ok(ResCnn {
        hyper: hyper.clone(),
        cnn: Sequential::new(layers),
        linear,
        stats: None,
    })
}

impl ResCnn {
    pub fn set_stats(&mut self, stats: ChannelStats) {
        self.stats = Some(stats);
    }

    pub fn stats(&self) -> Option<&ChannelStats> {
        self.stats.as_ref()
    }

    pub fn has_cnn_branch(&self) -> bool {
        !self.cnn.is_empty()
    }

    fn require_stats(&self) -> Result<&ChannelStats> {
        self.stats.as_ref().ok_or_else(|| {
            CoreError::Invalid(
                "channel standardization statistics are not set; train or load the model first"
                    .into(),
            )
        })
    }

    fn check_batch(&self, norm: &Tensor, means: &[[f64; NUM_CHANNELS]]) -> Result<usize> {
        let size = self.hyper.window_size();
        if norm.shape().len() != 4
            || norm.shape()[1] != NUM_CHANNELS
            || norm.shape()[2] != size
            || norm.shape()[3] != size
        {
            return Err(CoreError::Invalid(format!(
                "expected input [B, {NUM_CHANNELS}, {size}, {size}], got {:?}",
                norm.shape()
            )));
        }
        if norm.shape()[0] != means.len() {
            return Err(CoreError::Invalid(format!(
                "{} windows but {} channel-mean rows",
                norm.shape()[0],
                means.len()
            )));
        }
        Ok(norm.shape()[0])
    }

    /// Standardized channel means as a `[B, C]` tensor for the linear branch.
    fn standardized_means(
        &self,
        means: &[[f64; NUM_CHANNELS]],
        stats: &ChannelStats,
    ) -> Tensor {
        let batch = means.len();
        let mut z = Tensor::zeros(&[batch, NUM_CHANNELS]);
        for (b, row) in means.iter().enumerate() {
            for k in 0..NUM_CHANNELS {
                z.data_mut()[b * NUM_CHANNELS + k] = (row[k] - stats.mean[k]) / stats.std[k];
            }
        }
        z
    }

    /// Runs both branches and returns per-sample predictions with the
    /// additive split. `norm` is the batch of normalized windows and
    /// `means` the matching raw channel means.
    pub fn predict_batch(
        &mut self,
        norm: &Tensor,
        means: &[[f64; NUM_CHANNELS]],
        mode: Mode,
    ) -> Result<Vec<Prediction>> {
        let stats = self.require_stats()?.clone();
        let batch = self.check_batch(norm, means)?;
        let cnn_out = if self.cnn.is_empty() {
            None
        } else {
            Some(self.cnn.forward(norm, mode)?)
        };
        let z = self.standardized_means(means, &stats);
        let lin_out = self.linear.forward(&z, mode)?;
        let mut out = Vec::with_capacity(batch);
        for b in 0..batch {
            let cnn = cnn_out.as_ref().map_or(0.0, |t| t.data()[b]);
            let linear = lin_out.data()[b];
            out.push(Prediction {
                combined: cnn + linear,
                cnn,
                linear,
            });
        }
        Ok(out)
    }

    /// Backpropagates a per-sample loss gradient through both branches,
    /// leaving parameter gradients in place for an optimizer step.
    pub fn backward(&mut self, dy: &[f64]) -> Result<()> {
        let grad = Tensor::from_vec(&[dy.len(), 1], dy.to_vec())?;
        if !self.cnn.is_empty() {
            self.cnn.backward(&grad)?;
        }
        self.linear.backward(&grad)?;
        Ok(())
    }

    /// Gradient of the prediction with respect to the raw (unnormalized)
    /// window of one sample, shape `[C, S, S]`.
    ///
    /// The convolutional branch sees the window only through its per-sample
    /// normalization, so its gradient must pass back through the mean and
    /// spread terms; the linear branch contributes a constant per channel
    /// through the window mean.
    pub fn input_gradient(&mut self, sample: &NormalizedStack) -> Result<Tensor> {
        let stats = self.require_stats()?.clone();
        let size = self.hyper.window_size();
        if sample.data.shape() != [NUM_CHANNELS, size, size] {
            return Err(CoreError::Invalid(format!(
                "expected window [{NUM_CHANNELS}, {size}, {size}], got {:?}",
                sample.data.shape()
            )));
        }
        let cells = (size * size) as f64;
        let mut grad = Tensor::zeros(&[NUM_CHANNELS, size, size]);

        if !self.cnn.is_empty() {
            let norm = sample.data.clone().reshaped(&[1, NUM_CHANNELS, size, size])?;
            self.cnn.forward(&norm, Mode::Eval)?;
            let g = self
                .cnn
                .backward(&Tensor::from_vec(&[1, 1], vec![1.0])?)?;
            for k in 0..NUM_CHANNELS {
                if sample.degenerate[k] {
                    continue; // constant channel: the branch saw only zeros
                }
                let mut g1 = 0.0;
                let mut g2 = 0.0;
                for i in 0..size {
                    for j in 0..size {
                        let gij = g.at4(0, k, i, j);
                        g1 += gij;
                        g2 += gij * sample.data.at3(k, i, j);
                    }
                }
                let sigma = sample.stds[k];
                for i in 0..size {
                    for j in 0..size {
                        let gij = g.at4(0, k, i, j);
                        let zij = sample.data.at3(k, i, j);
                        *grad.at3_mut(k, i, j) =
                            (gij - g1 / cells - zij * g2 / cells) / sigma;
                    }
                }
            }
        }

        // Linear branch: d y / d x_ij = w_k / (S_k * cells), uniform over
        // the window.
        let w = self.linear.weight().data();
        for k in 0..NUM_CHANNELS {
            let term = w[k] / (stats.std[k] * cells);
            for i in 0..size {
                for j in 0..size {
                    *grad.at3_mut(k, i, j) += term;
                }
            }
        }
        Ok(grad)
    }

    /// Persistent tensors of both branches, for checkpoints.
    pub fn state(&self) -> Vec<(String, Tensor)> {
        let mut out = self.cnn.state();
        self.linear
            .visit_tensors(&mut |name, t| out.push((name.to_string(), t.clone())));
        out
    }

    pub fn load_state(&mut self, entries: &[(String, Tensor)]) -> Result<()> {
        // Split entries between branches by name.
        let mut linear_names = Vec::new();
        self.linear.visit_tensors(&mut |name, _| linear_names.push(name.to_string()));
        let (lin, cnn): (Vec<_>, Vec<_>) = entries
            .iter()
            .cloned()
            .partition(|(n, _)| linear_names.iter().any(|l| l == n));
        self.cnn.load_state(&cnn)?;
        let mut err = None;
        self.linear.visit_tensors_mut(&mut |name, t| {
            match lin.iter().find(|(n, _)| n == name) {
                Some((_, saved)) if saved.shape() == t.shape() => {
                    t.data_mut().copy_from_slice(saved.data());
                }
                Some(_) => err = Some(format!("tensor shape mismatch for {name}")),
                None => err = Some(format!("checkpoint lacks tensor {name}")),
            }
        });
        match err {
            Some(e) => Err(CoreError::Checkpoint(e)),
            None => Ok(()),
        }
    }
}

impl ParamSet for ResCnn {
    fn visit_params(&mut self, f: &mut dyn FnMut(ParamSlot<'_>)) {
        self.cnn.visit_params(f);
        self.linear.visit_params(f);
    }
}
