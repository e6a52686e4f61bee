//! Learning and damage accounting for gridded fossil-energy PM2.5 fields.
//!
//! The crate covers the full pipeline: absolute-grid worlds with station
//! windows ([`grid`]), hand-built neural network layers with exact
//! backpropagation ([`nn`]), the hybrid convolutional + linear concentration
//! model ([`model`]), weighted training and hyperparameter search
//! ([`train`]), concentration-response health and damage accounting
//! ([`health`]), and a synthetic world generator with a closed-form oracle
//! ([`synth`]).

pub mod error;
pub mod grid;
pub mod health;
pub mod model;
pub mod nn;
pub mod rng;
pub mod synth;
pub mod tensor;
pub mod train;

pub use error::{CoreError, Result};
