use crate::error::{CoreError, Result};
use crate::nn::{Layer, Mode};
use crate::tensor::Tensor;

/// Max pooling with valid padding. On ties the first maximum in row-major
/// window order wins, and the full gradient flows to that one cell.
pub struct MaxPool2d {
    name: String,
    kernel: usize,
    stride: usize,
    /// Flat input index of each output's argmax.
    argmax: Vec<usize>,
    input_shape: Vec<usize>,
}

impl MaxPool2d {
    pub fn new(name: impl Into<String>, kernel: usize, stride: usize) -> Result<MaxPool2d> {
        let name = name.into();
        if kernel == 0 || stride == 0 {
            return Err(CoreError::Build {
                layer: name,
                message: format!("kernel {kernel} and stride {stride} must be positive"),
            });
        }
        Ok(MaxPool2d {
            name,
            kernel,
            stride,
            argmax: Vec::new(),
            input_shape: Vec::new(),
        })
    }

    fn out_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        if h < self.kernel || w < self.kernel {
            return Err(CoreError::Build {
                layer: self.name.clone(),
                message: format!("kernel {} does not fit the {h}x{w} input", self.kernel),
            });
        }
        Ok((
            (h - self.kernel) / self.stride + 1,
            (w - self.kernel) / self.stride + 1,
        ))
    }
}

impl Layer for MaxPool2d {
    fn name(&self) -> &str {
        &self.name
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        if input.len() != 4 {
            return Err(CoreError::Build {
                layer: self.name.clone(),
                message: format!("expected input [B, C, H, W], got {input:?}"),
            });
        }
        let (oh, ow) = self.out_hw(input[2], input[3])?;
        Ok(vec![input[0], input[1], oh, ow])
    }

    fn forward(&mut self, x: &Tensor, _mode: Mode) -> Result<Tensor> {
        let out_shape = self.output_shape(x.shape())?;
        let (batch, chans, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
        let (oh, ow) = (out_shape[2], out_shape[3]);
        self.input_shape = x.shape().to_vec();
        self.argmax.clear();
        self.argmax.reserve(batch * chans * oh * ow);
        let mut y = Tensor::zeros(&out_shape);
        let data = x.data();
        let out = y.data_mut();
        let mut o = 0;
        for b in 0..batch {
            for c in 0..chans {
                let plane = (b * chans + c) * h * w;
                for oi in 0..oh {
                    for oj in 0..ow {
                        let mut best_idx = plane + (oi * self.stride) * w + oj * self.stride;
                        let mut best = data[best_idx];
                        for ki in 0..self.kernel {
                            let row = plane + (oi * self.stride + ki) * w + oj * self.stride;
                            for kj in 0..self.kernel {
                                let v = data[row + kj];
                                if v > best {
                                    best = v;
                                    best_idx = row + kj;
                                }
                            }
                        }
                        out[o] = best;
                        self.argmax.push(best_idx);
                        o += 1;
                    }
                }
            }
        }
        Ok(y)
    }

    fn backward(&mut self, dy: &Tensor) -> Result<Tensor> {
        if self.input_shape.is_empty() {
            return Err(CoreError::Invalid(format!(
                "{}: backward before forward",
                self.name
            )));
        }
        if dy.len() != self.argmax.len() {
            return Err(CoreError::Invalid(format!(
                "{}: gradient has {} values, expected {}",
                self.name,
                dy.len(),
                self.argmax.len()
            )));
        }
        let mut dx = Tensor::zeros(&self.input_shape);
        for (g, idx) in dy.data().iter().zip(&self.argmax) {
            dx.data_mut()[*idx] += *g;
        }
        Ok(dx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{max_rel_error, numeric_gradient};

    #[test]
    fn pools_maxima_with_stride() {
        let mut layer = MaxPool2d::new("p", 2, 2).unwrap();
        let x = Tensor::from_vec(
            &[1, 1, 4, 4],
            vec![
                1.0, 2.0, 5.0, 4.0, //
                3.0, 0.0, 1.0, 1.0, //
                0.0, 0.0, 9.0, 8.0, //
                7.0, 0.0, 8.0, 9.0,
            ],
        )
        .unwrap();
        let y = layer.forward(&x, Mode::Eval).unwrap();
        assert_eq!(y.shape(), &[1, 1, 2, 2]);
        assert_eq!(y.data(), &[3.0, 5.0, 7.0, 9.0]);
    }

    #[test]
    fn ties_go_to_the_first_in_row_major_order() {
        let mut layer = MaxPool2d::new("p", 2, 2).unwrap();
        let x = Tensor::from_vec(&[1, 1, 2, 2], vec![4.0, 4.0, 4.0, 4.0]).unwrap();
        layer.forward(&x, Mode::Eval).unwrap();
        let dy = Tensor::from_vec(&[1, 1, 1, 1], vec![1.0]).unwrap();
        let dx = layer.backward(&dy).unwrap();
        assert_eq!(dx.data(), &[1.0, 0.0, 0.0, 0.0]);

        // Tie between positions 1 and 2 (row-major): the earlier index wins.
        let x = Tensor::from_vec(&[1, 1, 2, 2], vec![0.0, 7.0, 7.0, 1.0]).unwrap();
        layer.forward(&x, Mode::Eval).unwrap();
        let dx = layer.backward(&dy).unwrap();
        assert_eq!(dx.data(), &[0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn overlapping_windows_accumulate_gradient() {
        let mut layer = MaxPool2d::new("p", 2, 1).unwrap();
        // The centre cell dominates all four overlapping windows.
        let x = Tensor::from_vec(
            &[1, 1, 3, 3],
            vec![0.0, 0.0, 0.0, 0.0, 9.0, 0.0, 0.0, 0.0, 0.0],
        )
        .unwrap();
        let y = layer.forward(&x, Mode::Eval).unwrap();
        assert_eq!(y.data(), &[9.0; 4]);
        let dy = Tensor::from_vec(&[1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let dx = layer.backward(&dy).unwrap();
        assert_eq!(dx.at4(0, 0, 1, 1), 10.0);
        assert_eq!(dx.data().iter().sum::<f64>(), 10.0);
    }

    #[test]
    fn gradient_matches_finite_differences_off_ties() {
        let mut layer = MaxPool2d::new("p", 3, 2).unwrap();
        let shape = [2, 2, 7, 7];
        let n: usize = shape.iter().product();
        // Distinct values so no ties perturb the finite differences.
        let x0: Vec<f64> = (0..n).map(|i| ((i * 97) % 391) as f64 * 0.013).collect();
        let out_shape = layer.output_shape(&shape).unwrap();
        let n_out: usize = out_shape.iter().product();
        let probe: Vec<f64> = (0..n_out).map(|i| 1.0 + (i % 5) as f64 * 0.3).collect();

        let mut f = |x: &[f64]| {
            let xt = Tensor::from_vec(&shape, x.to_vec()).unwrap();
            let y = layer.forward(&xt, Mode::Eval).unwrap();
            y.data().iter().zip(&probe).map(|(a, b)| a * b).sum::<f64>()
        };
        let numeric = numeric_gradient(&mut f, &x0);
        let xt = Tensor::from_vec(&shape, x0.clone()).unwrap();
        layer.forward(&xt, Mode::Eval).unwrap();
        let dy = Tensor::from_vec(&out_shape, probe).unwrap();
        let dx = layer.backward(&dy).unwrap();
        assert!(max_rel_error(dx.data(), &numeric) < 1e-8);
    }
}
