use crate::error::{CoreError, Result};
use crate::nn::{he_normal, qualified, Layer, Mode, ParamSlot};
use crate::tensor::{matmul_acc, matmul_at_acc, matmul_bt_acc, Tensor};
use rand::Rng;

/// Fully connected layer: `y = x W^T + b` on `[B, in] -> [B, out]`.
pub struct Dense {
    name: String,
    in_features: usize,
    out_features: usize,
    /// Weights, shape `[out, in]`.
    weight: Tensor,
    bias: Tensor,
    dweight: Tensor,
    dbias: Tensor,
    input: Option<Tensor>,
}

impl Dense {
    pub fn new(
        name: impl Into<String>,
        in_features: usize,
        out_features: usize,
        rng: &mut impl Rng,
    ) -> Result<Dense> {
        let name = name.into();
        if in_features == 0 || out_features == 0 {
            return Err(CoreError::Build {
                layer: name,
                message: format!("feature counts must be positive, got {in_features} -> {out_features}"),
            });
        }
        Ok(Dense {
            weight: he_normal(&[out_features, in_features], in_features, rng),
            bias: Tensor::zeros(&[out_features]),
            dweight: Tensor::zeros(&[out_features, in_features]),
            dbias: Tensor::zeros(&[out_features]),
            name,
            in_features,
            out_features,
            input: None,
        })
    }

    pub fn weight(&self) -> &Tensor {
        &self.weight
    }

    pub fn bias(&self) -> &Tensor {
        &self.bias
    }

    fn check_input(&self, shape: &[usize]) -> Result<usize> {
        if shape.len() != 2 || shape[1] != self.in_features {
            return Err(CoreError::Build {
                layer: self.name.clone(),
                message: format!(
                    "expected input [B, {}], got {shape:?}",
                    self.in_features
                ),
            });
        }
        Ok(shape[0])
    }
}

impl Layer for Dense {
    fn name(&self) -> &str {
        &self.name
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let batch = self.check_input(input)?;
        Ok(vec![batch, self.out_features])
    }

    fn forward(&mut self, x: &Tensor, _mode: Mode) -> Result<Tensor> {
        let batch = self.check_input(x.shape())?;
        let mut y = Tensor::zeros(&[batch, self.out_features]);
        matmul_bt_acc(
            batch,
            self.in_features,
            self.out_features,
            x.data(),
            self.weight.data(),
            0.0,
            y.data_mut(),
        );
        for b in 0..batch {
            for o in 0..self.out_features {
                y.data_mut()[b * self.out_features + o] += self.bias.data()[o];
            }
        }
        self.input = Some(x.clone());
        Ok(y)
    }

    fn backward(&mut self, dy: &Tensor) -> Result<Tensor> {
        let x = self.input.as_ref().ok_or_else(|| {
            CoreError::Invalid(format!("{}: backward before forward", self.name))
        })?;
        let batch = x.shape()[0];
        if dy.shape() != [batch, self.out_features] {
            return Err(CoreError::Invalid(format!(
                "{}: gradient shape {:?} does not match output [{batch}, {}]",
                self.name,
                dy.shape(),
                self.out_features
            )));
        }
        // dW = dy^T x, db = sum over batch, dx = dy W
        matmul_at_acc(
            self.out_features,
            batch,
            self.in_features,
            dy.data(),
            x.data(),
            0.0,
            self.dweight.data_mut(),
        );
        for v in self.dbias.data_mut() {
            *v = 0.0;
        }
        for b in 0..batch {
            for o in 0..self.out_features {
                self.dbias.data_mut()[o] += dy.data()[b * self.out_features + o];
            }
        }
        let mut dx = Tensor::zeros(&[batch, self.in_features]);
        matmul_acc(
            batch,
            self.out_features,
            self.in_features,
            dy.data(),
            self.weight.data(),
            0.0,
            dx.data_mut(),
        );
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
