use crate::error::{CoreError, Result};
use serde::{Deserialize, Serialize};

/// Everything that defines one model and training configuration. Field
/// order here is the canonical dimension order for hyperparameter search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperParams {
    /// Training epochs.
    pub iterations: usize,
    pub batch_size: usize,
    /// Convolution blocks; 0 drops the convolutional branch entirely.
    pub conv_layers: usize,
    /// Filters per convolution.
    pub filters: usize,
    pub conv_kernel: usize,
    pub conv_stride: usize,
    pub pool_kernel: usize,
    pub pool_stride: usize,
    pub dropout: bool,
    pub dropout_rate: f64,
    pub batchnorm: bool,
    /// Fully connected layers between flatten and the scalar head.
    pub fc_layers: usize,
    pub fc_width: usize,
    pub augment: bool,
    /// Variance of the Gaussian noise added to augmented windows.
    pub augment_noise: f64,
    pub learning_rate: f64,
    /// Cells from the station to the window edge; the window spans
    /// `2 * half_extent + 1` cells per side.
    pub half_extent: usize,
}

impl Default for HyperParams {
    fn default() -> HyperParams {
        HyperParams {
            iterations: 500,
            batch_size: 200,
            conv_layers: 2,
            filters: 50,
            conv_kernel: 3,
            conv_stride: 2,
            pool_kernel: 2,
            pool_stride: 2,
            dropout: false,
            dropout_rate: 0.1,
            batchnorm: true,
            fc_layers: 2,
            fc_width: 200,
            augment: true,
            augment_noise: 0.05,
            learning_rate: 1e-3,
            half_extent: 10,
        }
    }
}

impl HyperParams {
    pub fn window_size(&self) -> usize {
        2 * self.half_extent + 1
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.iterations == 0 {
            problems.push("iterations must be positive".to_string());
        }
        if self.batch_size == 0 {
            problems.push("batch_size must be positive".to_string());
        }
        if self.conv_layers > 0 {
            if self.filters == 0 {
                problems.push("filters must be positive".to_string());
            }
            if self.conv_kernel == 0 || self.conv_stride == 0 {
                problems.push("conv kernel and stride must be positive".to_string());
            }
            if self.pool_kernel == 0 || self.pool_stride == 0 {
                problems.push("pool kernel and stride must be positive".to_string());
            }
            if self.fc_width == 0 {
                problems.push("fc_width must be positive".to_string());
            }
        }
        if self.dropout && !(0.0..1.0).contains(&self.dropout_rate) {
            problems.push(format!(
                "dropout_rate must lie in [0, 1), got {}",
                self.dropout_rate
            ));
        }
        if !(self.augment_noise.is_finite() && self.augment_noise >= 0.0) {
            problems.push(format!("augment_noise must be >= 0, got {}", self.augment_noise));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            problems.push(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if self.half_extent == 0 {
            problems.push("half_extent must be positive".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(CoreError::Config(problems.join("; ")))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip_through_toml() {
        let hyper = HyperParams::default();
        hyper.validate().unwrap();
        let text = toml::to_string(&hyper).unwrap();
        let back: HyperParams = toml::from_str(&text).unwrap();
        assert_eq!(back, hyper);
    }

    #[test]
    fn partial_toml_fills_defaults() {
        let hyper: HyperParams = toml::from_str("iterations = 42\nhalf_extent = 20\n").unwrap();
        assert_eq!(hyper.iterations, 42);
        assert_eq!(hyper.half_extent, 20);
        assert_eq!(hyper.batch_size, HyperParams::default().batch_size);
        assert_eq!(hyper.window_size(), 41);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let err = toml::from_str::<HyperParams>("iterations = 5\nbatchsize = 3\n");
        assert!(err.is_err());
    }

    #[test]
    fn validation_flags_bad_values() {
        let mut hyper = HyperParams::default();
        hyper.iterations = 0;
        assert!(hyper.validate().is_err());

        let mut hyper = HyperParams::default();
        hyper.dropout = true;
        hyper.dropout_rate = 1.0;
        assert!(hyper.validate().is_err());
        hyper.dropout = false;
        // An unused rate of 1.0 is harmless.
        assert!(hyper.validate().is_ok());

        let mut hyper = HyperParams::default();
        hyper.learning_rate = 0.0;
        assert!(hyper.validate().is_err());
    }
}
