//! Hand-built network layers with exact backpropagation.
//!
//! Every layer owns its parameters, gradients, and whatever forward state
//! its backward pass needs. Gradients are recomputed (not accumulated) on
//! each backward call. Batches are laid out `[B, C, H, W]` for spatial
//! layers and `[B, features]` after flattening.

mod adam;
mod batchnorm;
mod checkpoint;
mod conv;
mod dense;
mod dropout;
mod flatten;
pub mod gradcheck;
mod init;
mod pool;
mod relu;

pub use adam::Adam;
pub use batchnorm::BatchNorm2d;
pub use checkpoint::{load_tensors, save_tensors};
pub use conv::Conv2d;
pub use dense::Dense;
pub use dropout::Dropout;
pub use flatten::Flatten;
pub use init::he_normal;
pub use pool::MaxPool2d;
pub use relu::Relu;

use crate::error::{CoreError, Result};
use crate::tensor::Tensor;

/// Whether a forward pass uses training behaviour (dropout active, batch
/// statistics) or inference behaviour (identity dropout, running statistics).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// A mutable view of one trainable parameter and its gradient.
pub struct ParamSlot<'a> {
    pub name: &'a str,
    pub value: &'a mut Tensor,
    pub grad: &'a mut Tensor,
}

/// Anything with a flat collection of named trainable parameters; the
/// optimizer works entirely through this view.
pub trait ParamSet {
    fn visit_params(&mut self, f: &mut dyn FnMut(ParamSlot<'_>));
}

impl ParamSet for Sequential {
    fn visit_params(&mut self, f: &mut dyn FnMut(ParamSlot<'_>)) {
        Sequential::visit_params(self, f);
    }
}

pub trait Layer: Send {
    fn name(&self) -> &str;

    /// Output shape for a given input shape, without running the layer.
    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>>;

    fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor>;

    /// Propagates `dy` back through the most recent forward pass, storing
    /// parameter gradients and returning the input gradient.
    fn backward(&mut self, dy: &Tensor) -> Result<Tensor>;

    /// Visits trainable parameters (weights and biases).
    fn visit_params(&mut self, _f: &mut dyn FnMut(ParamSlot<'_>)) {}

    /// Visits every persistent tensor: parameters plus running statistics.
    fn visit_tensors(&self, _f: &mut dyn FnMut(&str, &Tensor)) {}

    /// Mutable counterpart of [`Layer::visit_tensors`], used when restoring
    /// a checkpoint.
    fn visit_tensors_mut(&mut self, _f: &mut dyn FnMut(&str, &mut Tensor)) {}
}

fn qualified(layer: &str, field: &str) -> String {
    format!("{layer}.{field}")
}

/// An ordered stack of layers applied front to back.
pub struct Sequential {
    layers: Vec<Box<dyn Layer>>,
}

impl Sequential {
    pub fn new(layers: Vec<Box<dyn Layer>>) -> Sequential {
        Sequential { layers }
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let mut shape = input.to_vec();
        for layer in &self.layers {
            shape = layer.output_shape(&shape)?;
        }
        Ok(shape)
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let mut y = x.clone();
        for layer in &mut self.layers {
            y = layer.forward(&y, mode)?;
        }
        Ok(y)
    }

    pub fn backward(&mut self, dy: &Tensor) -> Result<Tensor> {
        let mut g = dy.clone();
        for layer in self.layers.iter_mut().rev() {
            g = layer.backward(&g)?;
        }
        Ok(g)
    }

    pub fn visit_params(&mut self, f: &mut dyn FnMut(ParamSlot<'_>)) {
        for layer in &mut self.layers {
            layer.visit_params(f);
        }
    }

    pub fn visit_tensors(&self, f: &mut dyn FnMut(&str, &Tensor)) {
        for layer in &self.layers {
            layer.visit_tensors(f);
        }
    }

    pub fn visit_tensors_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor)) {
        for layer in &mut self.layers {
            layer.visit_tensors_mut(f);
        }
    }

    /// Snapshot of every persistent tensor, in layer order.
    pub fn state(&self) -> Vec<(String, Tensor)> {
        let mut out = Vec::new();
        self.visit_tensors(&mut |name, t| out.push((name.to_string(), t.clone())));
        out
    }

    /// Restores a snapshot produced by [`Sequential::state`]. Every entry
    /// must match an existing tensor by name and shape, and every tensor
    /// must be covered.
    pub fn load_state(&mut self, entries: &[(String, Tensor)]) -> Result<()> {
        use std::collections::HashMap;
        let mut by_name: HashMap<&str, &Tensor> =
            entries.iter().map(|(n, t)| (n.as_str(), t)).collect();
        if by_name.len() != entries.len() {
            return Err(CoreError::Checkpoint("duplicate tensor name".into()));
        }
        let mut missing = Vec::new();
        let mut mismatch = Vec::new();
        self.visit_tensors_mut(&mut |name, t| match by_name.remove(name) {
            Some(saved) if saved.shape() == t.shape() => {
                t.data_mut().copy_from_slice(saved.data());
            }
            Some(saved) => mismatch.push(format!(
                "{name}: saved shape {:?}, model shape {:?}",
                saved.shape(),
                t.shape()
            )),
            None => missing.push(name.to_string()),
        });
        if !mismatch.is_empty() {
            return Err(CoreError::Checkpoint(format!(
                "tensor shape mismatch: {}",
                mismatch.join("; ")
            )));
        }
        if !missing.is_empty() {
            return Err(CoreError::Checkpoint(format!(
                "checkpoint lacks tensors: {}",
                missing.join(", ")
            )));
        }
        if !by_name.is_empty() {
            let extra: Vec<&str> = by_name.into_keys().collect();
            return Err(CoreError::Checkpoint(format!(
                "checkpoint has unknown tensors: {}",
                extra.join(", ")
            )));
        }
        Ok(())
    }
}
