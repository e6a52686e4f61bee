use crate::error::{CoreError, Result};
use crate::nn::{Layer, Mode};
use crate::tensor::Tensor;

/// Collapses `[B, C, H, W]` (or any rank >= 2) to `[B, features]`.
pub struct Flatten {
    name: String,
    input_shape: Vec<usize>,
}

impl Flatten {
    pub fn new(name: impl Into<String>) -> Flatten {
        Flatten {
            name: name.into(),
            input_shape: Vec::new(),
        }
    }
}

impl Layer for Flatten {
    fn name(&self) -> &str {
        &self.name
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        if input.len() < 2 {
            return Err(CoreError::Build {
                layer: self.name.clone(),
                message: format!("cannot flatten rank-{} input", input.len()),
            });
        }
        Ok(vec![input[0], input[1..].iter().product()])
    }

    fn forward(&mut self, x: &Tensor, _mode: Mode) -> Result<Tensor> {
        let out = self.output_shape(x.shape())?;
        self.input_shape = x.shape().to_vec();
        Ok(x.clone().reshaped(&out)?)
    }

    fn backward(&mut self, dy: &Tensor) -> Result<Tensor> {
        Ok(dy.clone().reshaped(&self.input_shape)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_shape() {
        let mut layer = Flatten::new("f");
        let x = Tensor::from_vec(&[2, 3, 2, 2], (0..24).map(|v| v as f64).collect()).unwrap();
        let y = layer.forward(&x, Mode::Eval).unwrap();
        assert_eq!(y.shape(), &[2, 12]);
        assert_eq!(y.data(), x.data());
        let dx = layer.backward(&y).unwrap();
        assert_eq!(dx.shape(), &[2, 3, 2, 2]);
    }
}
