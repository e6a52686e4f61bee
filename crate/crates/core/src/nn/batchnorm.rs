use crate::error::{CoreError, Result};
use crate::nn::{qualified, Layer, Mode, ParamSlot};
use crate::tensor::Tensor;

const EPS: f64 = 1e-5;
/// Fraction of the old running statistic kept at each training step.
const MOMENTUM: f64 = 0.9;

/// Per-channel batch normalization over `[B, C, H, W]`.
///
/// Training normalizes with the biased batch variance and folds the
/// unbiased variance into the running estimate; evaluation normalizes with
/// the running statistics, so its backward pass treats them as constants.
pub struct BatchNorm2d {
    name: String,
    channels: usize,
    gamma: Tensor,
    beta: Tensor,
    running_mean: Tensor,
    running_var: Tensor,
    dgamma: Tensor,
    dbeta: Tensor,
    /// Normalized values from the last forward pass.
    z: Tensor,
    /// 1/sqrt(var + eps) per channel used by the last forward pass.
    inv_std: Vec<f64>,
    last_mode: Option<Mode>,
}

impl BatchNorm2d {
    pub fn new(name: impl Into<String>, channels: usize) -> Result<BatchNorm2d> {
        let name = name.into();
        if channels == 0 {
            return Err(CoreError::Build {
                layer: name,
                message: "channel count must be positive".into(),
            });
        }
        Ok(BatchNorm2d {
            name,
            channels,
            gamma: Tensor::filled(&[channels], 1.0),
            beta: Tensor::zeros(&[channels]),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::filled(&[channels], 1.0),
            dgamma: Tensor::zeros(&[channels]),
            dbeta: Tensor::zeros(&[channels]),
            z: Tensor::zeros(&[1]),
            inv_std: Vec::new(),
            last_mode: None,
        })
    }

    fn check_input(&self, shape: &[usize]) -> Result<(usize, usize)> {
        if shape.len() != 4 || shape[1] != self.channels {
            return Err(CoreError::Build {
                layer: self.name.clone(),
                message: format!(
                    "expected input [B, {}, H, W], got {shape:?}",
                    self.channels
                ),
            });
        }
        Ok((shape[0], shape[2] * shape[3]))
    }

    pub fn running_stats(&self) -> (&Tensor, &Tensor) {
        (&self.running_mean, &self.running_var)
    }
}

impl Layer for BatchNorm2d {
    fn name(&self) -> &str {
        &self.name
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        self.check_input(input)?;
        Ok(input.to_vec())
    }

    fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let (batch, plane) = self.check_input(x.shape())?;
        if mode == Mode::Train && batch < 2 {
            return Err(CoreError::Invalid(format!(
                "{}: training batch normalization needs batch size > 1, got {batch}",
                self.name
            )));
        }
        let m = (batch * plane) as f64;
        let mut y = Tensor::zeros(x.shape());
        let mut z = Tensor::zeros(x.shape());
        self.inv_std = vec![0.0; self.channels];
        for c in 0..self.channels {
            let (mean, var) = match mode {
                Mode::Train => {
                    let mut sum = 0.0;
                    for b in 0..batch {
                        let base = (b * self.channels + c) * plane;
                        sum += x.data()[base..base + plane].iter().sum::<f64>();
                    }
                    let mean = sum / m;
                    let mut ss = 0.0;
                    for b in 0..batch {
                        let base = (b * self.channels + c) * plane;
                        for v in &x.data()[base..base + plane] {
                            ss += (v - mean) * (v - mean);
                        }
                    }
                    let var = ss / m;
                    let unbiased = ss / (m - 1.0);
                    let rm = &mut self.running_mean.data_mut()[c];
                    *rm = MOMENTUM * *rm + (1.0 - MOMENTUM) * mean;
                    let rv = &mut self.running_var.data_mut()[c];
                    *rv = MOMENTUM * *rv + (1.0 - MOMENTUM) * unbiased;
                    (mean, var)
                }
                Mode::Eval => (self.running_mean.data()[c], self.running_var.data()[c]),
            };
            let inv = 1.0 / (var + EPS).sqrt();
            self.inv_std[c] = inv;
            let (g, bta) = (self.gamma.data()[c], self.beta.data()[c]);
            for b in 0..batch {
                let base = (b * self.channels + c) * plane;
                for i in base..base + plane {
                    let zi = (x.data()[i] - mean) * inv;
                    z.data_mut()[i] = zi;
                    y.data_mut()[i] = g * zi + bta;
                }
            }
        }
        self.z = z;
        self.last_mode = Some(mode);
        Ok(y)
    }

    fn backward(&mut self, dy: &Tensor) -> Result<Tensor> {
        let mode = self.last_mode.ok_or_else(|| {
            CoreError::Invalid(format!("{}: backward before forward", self.name))
        })?;
        if dy.shape() != self.z.shape() {
            return Err(CoreError::Invalid(format!(
                "{}: gradient shape {:?} does not match output {:?}",
                self.name,
                dy.shape(),
                self.z.shape()
            )));
        }
        let (batch, plane) = self.check_input(dy.shape())?;
        let m = (batch * plane) as f64;
        let mut dx = Tensor::zeros(dy.shape());
        for c in 0..self.channels {
            let mut sum_dy = 0.0;
            let mut sum_dy_z = 0.0;
            for b in 0..batch {
                let base = (b * self.channels + c) * plane;
                for i in base..base + plane {
                    sum_dy += dy.data()[i];
                    sum_dy_z += dy.data()[i] * self.z.data()[i];
                }
            }
            self.dgamma.data_mut()[c] = sum_dy_z;
            self.dbeta.data_mut()[c] = sum_dy;
            let scale = self.gamma.data()[c] * self.inv_std[c];
            match mode {
                Mode::Train => {
                    // Batch statistics depend on the input, so their
                    // derivatives feed back through the mean terms.
                    let mean_dy = sum_dy / m;
                    let mean_dy_z = sum_dy_z / m;
                    for b in 0..batch {
                        let base = (b * self.channels + c) * plane;
                        for i in base..base + plane {
                            dx.data_mut()[i] = scale
                                * (dy.data()[i] - mean_dy - self.z.data()[i] * mean_dy_z);
                        }
                    }
                }
                Mode::Eval => {
                    for b in 0..batch {
                        let base = (b * self.channels + c) * plane;
                        for i in base..base + plane {
                            dx.data_mut()[i] = scale * dy.data()[i];
                        }
                    }
                }
            }
        }
        Ok(dx)
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(ParamSlot<'_>)) {
        f(ParamSlot {
            name: &qualified(&self.name, "gamma"),
            value: &mut self.gamma,
            grad: &mut self.dgamma,
        });
        f(ParamSlot {
            name: &qualified(&self.name, "beta"),
            value: &mut self.beta,
            grad: &mut self.dbeta,
        });
    }

    fn visit_tensors(&self, f: &mut dyn FnMut(&str, &Tensor)) {
        f(&qualified(&self.name, "gamma"), &self.gamma);
        f(&qualified(&self.name, "beta"), &self.beta);
        f(&qualified(&self.name, "running_mean"), &self.running_mean);
        f(&qualified(&self.name, "running_var"), &self.running_var);
    }

    fn visit_tensors_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor)) {
        f(&qualified(&self.name, "gamma"), &mut self.gamma);
        f(&qualified(&self.name, "beta"), &mut self.beta);
        f(&qualified(&self.name, "running_mean"), &mut self.running_mean);
        f(&qualified(&self.name, "running_var"), &mut self.running_var);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{max_rel_error, numeric_gradient};

    fn sample_input() -> (Vec<usize>, Vec<f64>) {
        let shape = vec![4, 2, 3, 3];
        let n: usize = shape.iter().product();
        let x: Vec<f64> = (0..n).map(|i| ((i * 53) % 41) as f64 * 0.17 - 3.0).collect();
        (shape, x)
    }

    #[test]
    fn train_output_is_standardized_per_channel() {
        let (shape, x) = sample_input();
        let mut layer = BatchNorm2d::new("bn", 2).unwrap();
        let xt = Tensor::from_vec(&shape, x).unwrap();
        let y = layer.forward(&xt, Mode::Train).unwrap();
        let plane = 9;
        for c in 0..2 {
            let mut vals = Vec::new();
            for b in 0..4 {
                let base = (b * 2 + c) * plane;
                vals.extend_from_slice(&y.data()[base..base + plane]);
            }
            let m = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / m;
            let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-4); // eps shifts the variance slightly
        }
    }

    #[test]
    fn running_stats_blend_old_and_new() {
        let (shape, x) = sample_input();
        let mut layer = BatchNorm2d::new("bn", 2).unwrap();
        let xt = Tensor::from_vec(&shape, x.clone()).unwrap();
        layer.forward(&xt, Mode::Train).unwrap();
        let plane = 9;
        let m = 36.0;
        for c in 0..2 {
            let mut vals = Vec::new();
            for b in 0..4 {
                let base = (b * 2 + c) * plane;
                vals.extend_from_slice(&x[base..base + plane]);
            }
            let mean = vals.iter().sum::<f64>() / m;
            let ss = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
            let unbiased = ss / (m - 1.0);
            let expect_mean = 0.9 * 0.0 + 0.1 * mean;
            let expect_var = 0.9 * 1.0 + 0.1 * unbiased;
            assert!((layer.running_mean.data()[c] - expect_mean).abs() < 1e-12);
            assert!((layer.running_var.data()[c] - expect_var).abs() < 1e-12);
        }
    }

    #[test]
    fn train_rejects_singleton_batch() {
        let mut layer = BatchNorm2d::new("bn", 2).unwrap();
        let x = Tensor::zeros(&[1, 2, 3, 3]);
        let err = layer.forward(&x, Mode::Train).unwrap_err();
        assert!(err.to_string().contains("batch size > 1"));
        // Eval mode accepts a single sample.
        assert!(layer.forward(&x, Mode::Eval).is_ok());
    }

    #[test]
    fn train_gradient_matches_finite_differences() {
        let (shape, x0) = sample_input();
        let mut layer = BatchNorm2d::new("bn", 2).unwrap();
        // Non-trivial affine parameters.
        layer.gamma = Tensor::from_vec(&[2], vec![1.3, 0.7]).unwrap();
        layer.beta = Tensor::from_vec(&[2], vec![-0.2, 0.4]).unwrap();
        let n: usize = shape.iter().product();
        let probe: Vec<f64> = (0..n).map(|i| ((i % 11) as f64 - 5.0) * 0.1).collect();

        let mut f = |x: &[f64]| {
            // Reset running stats so repeated calls see identical state.
            layer.running_mean = Tensor::zeros(&[2]);
            layer.running_var = Tensor::filled(&[2], 1.0);
            let xt = Tensor::from_vec(&shape, x.to_vec()).unwrap();
            let y = layer.forward(&xt, Mode::Train).unwrap();
            y.data().iter().zip(&probe).map(|(a, b)| a * b).sum::<f64>()
        };
        let numeric = numeric_gradient(&mut f, &x0);
        let xt = Tensor::from_vec(&shape, x0.clone()).unwrap();
        layer.forward(&xt, Mode::Train).unwrap();
        let dy = Tensor::from_vec(&shape, probe.clone()).unwrap();
        let dx = layer.backward(&dy).unwrap();
        assert!(max_rel_error(dx.data(), &numeric) < 1e-6);

        // gamma / beta gradients.
        let g0 = layer.gamma.data().to_vec();
        let mut f = |g: &[f64]| {
            layer.gamma.data_mut().copy_from_slice(g);
            layer.running_mean = Tensor::zeros(&[2]);
            layer.running_var = Tensor::filled(&[2], 1.0);
            let y = layer.forward(&xt, Mode::Train).unwrap();
            y.data().iter().zip(&probe).map(|(a, b)| a * b).sum::<f64>()
        };
        let numeric_g = numeric_gradient(&mut f, &g0);
        layer.gamma.data_mut().copy_from_slice(&g0);
        layer.forward(&xt, Mode::Train).unwrap();
        layer.backward(&dy).unwrap();
        assert!(max_rel_error(layer.dgamma.data(), &numeric_g) < 1e-6);
    }

    #[test]
    fn eval_gradient_scales_by_running_spread() {
        let mut layer = BatchNorm2d::new("bn", 2).unwrap();
        layer.gamma = Tensor::from_vec(&[2], vec![2.0, 0.5]).unwrap();
        layer.running_mean = Tensor::from_vec(&[2], vec![1.0, -1.0]).unwrap();
        layer.running_var = Tensor::from_vec(&[2], vec![4.0, 0.25]).unwrap();
        let shape = [1, 2, 2, 2];
        let x0: Vec<f64> = (0..8).map(|i| i as f64 * 0.5).collect();
        let probe: Vec<f64> = (0..8).map(|i| 1.0 + i as f64 * 0.1).collect();

        let mut f = |x: &[f64]| {
            let xt = Tensor::from_vec(&shape, x.to_vec()).unwrap();
            let y = layer.forward(&xt, Mode::Eval).unwrap();
            y.data().iter().zip(&probe).map(|(a, b)| a * b).sum::<f64>()
        };
        let numeric = numeric_gradient(&mut f, &x0);
        let xt = Tensor::from_vec(&shape, x0.clone()).unwrap();
        layer.forward(&xt, Mode::Eval).unwrap();
        let dy = Tensor::from_vec(&shape, probe.clone()).unwrap();
        let dx = layer.backward(&dy).unwrap();
        assert!(max_rel_error(dx.data(), &numeric) < 1e-8);
        // Closed form: dy * gamma / sqrt(running_var + eps).
        for (i, g) in probe.iter().enumerate() {
            let c = (i / 4) % 2;
            let expect = g * layer.gamma.data()[c]
                / (layer.running_var.data()[c] + 1e-5).sqrt();
            assert!((dx.data()[i] - expect).abs() < 1e-12);
        }
    }
}
