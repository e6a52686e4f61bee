use crate::error::{CoreError, Result};
use crate::nn::{he_normal, qualified, Layer, Mode, ParamSlot};
use crate::tensor::{matmul_acc, matmul_at_acc, matmul_bt_acc, Tensor};
use rand::Rng;

/// 2-D convolution with valid padding, square kernel, and equal strides in
/// both directions. Implemented as im2col followed by one matrix product
/// per batch item.
pub struct Conv2d {
    name: String,
    in_channels: usize,
    filters: usize,
    kernel: usize,
    stride: usize,
    /// Weights, shape `[filters, in_channels, kernel, kernel]`.
    weight: Tensor,
    bias: Tensor,
    dweight: Tensor,
    dbias: Tensor,
    /// im2col patches of the last forward input, one `[CKK * OH*OW]` block
    /// per batch item, plus that input's spatial shape.
    cols: Vec<f64>,
    input_shape: Vec<usize>,
}

impl Conv2d {
    pub fn new(
        name: impl Into<String>,
        in_channels: usize,
        filters: usize,
        kernel: usize,
        stride: usize,
        rng: &mut impl Rng,
    ) -> Result<Conv2d> {
        let name = name.into();
        if in_channels == 0 || filters == 0 {
            return Err(CoreError::Build {
                layer: name,
                message: "channel and filter counts must be positive".into(),
            });
        }
        if kernel == 0 || stride == 0 {
            return Err(CoreError::Build {
                layer: name,
                message: format!("kernel {kernel} and stride {stride} must be positive"),
            });
        }
        let fan_in = in_channels * kernel * kernel;
        Ok(Conv2d {
            weight: he_normal(&[filters, in_channels, kernel, kernel], fan_in, rng),
            bias: Tensor::zeros(&[filters]),
            dweight: Tensor::zeros(&[filters, in_channels, kernel, kernel]),
            dbias: Tensor::zeros(&[filters]),
            name,
            in_channels,
            filters,
            kernel,
            stride,
            cols: Vec::new(),
            input_shape: Vec::new(),
        })
    }

    fn out_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        if h < self.kernel || w < self.kernel {
            return Err(CoreError::Build {
                layer: self.name.clone(),
                message: format!(
                    "kernel {} does not fit the {h}x{w} input",
                    self.kernel
                ),
            });
        }
        Ok((
            (h - self.kernel) / self.stride + 1,
            (w - self.kernel) / self.stride + 1,
        ))
    }

    fn check_input(&self, shape: &[usize]) -> Result<(usize, usize, usize)> {
        if shape.len() != 4 || shape[1] != self.in_channels {
            return Err(CoreError::Build {
                layer: self.name.clone(),
                message: format!(
                    "expected input [B, {}, H, W], got {shape:?}",
                    self.in_channels
                ),
            });
        }
        Ok((shape[0], shape[2], shape[3]))
    }

    /// Writes the im2col patch matrix (`[C*K*K, OH*OW]`, row-major) for one
    /// batch item.
    fn im2col(&self, x: &[f64], h: usize, w: usize, oh: usize, ow: usize, cols: &mut [f64]) {
        let (k, s) = (self.kernel, self.stride);
        let spatial = oh * ow;
        for c in 0..self.in_channels {
            for ki in 0..k {
                for kj in 0..k {
                    let q = (c * k + ki) * k + kj;
                    let row = &mut cols[q * spatial..(q + 1) * spatial];
                    for oi in 0..oh {
                        let src = (c * h + oi * s + ki) * w + kj;
                        for oj in 0..ow {
                            row[oi * ow + oj] = x[src + oj * s];
                        }
                    }
                }
            }
        }
    }

    /// Scatter-adds a patch-matrix gradient back onto the input layout.
    fn col2im(&self, dcols: &[f64], h: usize, w: usize, oh: usize, ow: usize, dx: &mut [f64]) {
        let (k, s) = (self.kernel, self.stride);
        let spatial = oh * ow;
        for c in 0..self.in_channels {
            for ki in 0..k {
                for kj in 0..k {
                    let q = (c * k + ki) * k + kj;
                    let row = &dcols[q * spatial..(q + 1) * spatial];
                    for oi in 0..oh {
                        let dst = (c * h + oi * s + ki) * w + kj;
                        for oj in 0..ow {
                            dx[dst + oj * s] += row[oi * ow + oj];
                        }
                    }
                }
            }
        }
    }
}

impl Layer for Conv2d {
    fn name(&self) -> &str {
        &self.name
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let (batch, h, w) = self.check_input(input)?;
        let (oh, ow) = self.out_hw(h, w)?;
        Ok(vec![batch, self.filters, oh, ow])
    }

    fn forward(&mut self, x: &Tensor, _mode: Mode) -> Result<Tensor> {
        let (batch, h, w) = self.check_input(x.shape())?;
        let (oh, ow) = self.out_hw(h, w)?;
        let ckk = self.in_channels * self.kernel * self.kernel;
        let spatial = oh * ow;
        let mut cols_buf = std::mem::take(&mut self.cols);
        cols_buf.resize(batch * ckk * spatial, 0.0);
        self.input_shape = x.shape().to_vec();
        let mut y = Tensor::zeros(&[batch, self.filters, oh, ow]);
        let in_stride = self.in_channels * h * w;
        let out_stride = self.filters * spatial;
        for b in 0..batch {
            let cols = &mut cols_buf[b * ckk * spatial..(b + 1) * ckk * spatial];
            self.im2col(&x.data()[b * in_stride..(b + 1) * in_stride], h, w, oh, ow, cols);
        }
        self.cols = cols_buf;
        for b in 0..batch {
            let cols = &self.cols[b * ckk * spatial..(b + 1) * ckk * spatial];
            let out = &mut y.data_mut()[b * out_stride..(b + 1) * out_stride];
            matmul_acc(self.filters, ckk, spatial, self.weight.data(), cols, 0.0, out);
            for f in 0..self.filters {
                let bias = self.bias.data()[f];
                for v in &mut out[f * spatial..(f + 1) * spatial] {
                    *v += bias;
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
        let (batch, h, w) = (self.input_shape[0], self.input_shape[2], self.input_shape[3]);
        let (oh, ow) = self.out_hw(h, w)?;
        let spatial = oh * ow;
        if dy.shape() != [batch, self.filters, oh, ow] {
            return Err(CoreError::Invalid(format!(
                "{}: gradient shape {:?} does not match output [{batch}, {}, {oh}, {ow}]",
                self.name,
                dy.shape(),
                self.filters
            )));
        }
        let ckk = self.in_channels * self.kernel * self.kernel;
        for v in self.dweight.data_mut() {
            *v = 0.0;
        }
        for v in self.dbias.data_mut() {
            *v = 0.0;
        }
        let mut dx = Tensor::zeros(&self.input_shape);
        let in_stride = self.in_channels * h * w;
        let out_stride = self.filters * spatial;
        let mut dcols = vec![0.0; ckk * spatial];
        for b in 0..batch {
            let dy_mat = &dy.data()[b * out_stride..(b + 1) * out_stride];
            let cols = &self.cols[b * ckk * spatial..(b + 1) * ckk * spatial];
            // dW += dy cols^T
            matmul_bt_acc(self.filters, spatial, ckk, dy_mat, cols, 1.0, self.dweight.data_mut());
            for f in 0..self.filters {
                self.dbias.data_mut()[f] += dy_mat[f * spatial..(f + 1) * spatial].iter().sum::<f64>();
            }
            // dcols = W^T dy
            matmul_at_acc(ckk, self.filters, spatial, self.weight.data(), dy_mat, 0.0, &mut dcols);
            self.col2im(&dcols, h, w, oh, ow, &mut dx.data_mut()[b * in_stride..(b + 1) * in_stride]);
        }
        Ok(dx)
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(ParamSlot<'_>)) {
        f(ParamSlot {
            name: &qualified(&self.name, "weight"),
            value: &mut self.weight,
            grad: &mut self.dweight,
        });
        f(ParamSlot {
            name: &qualified(&self.name, "bias"),
            value: &mut self.bias,
            grad: &mut self.dbias,
        });
    }

    fn visit_tensors(&self, f: &mut dyn FnMut(&str, &Tensor)) {
        f(&qualified(&self.name, "weight"), &self.weight);
        f(&qualified(&self.name, "bias"), &self.bias);
    }

    fn visit_tensors_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor)) {
        f(&qualified(&self.name, "weight"), &mut self.weight);
        f(&qualified(&self.name, "bias"), &mut self.bias);
    }
}
