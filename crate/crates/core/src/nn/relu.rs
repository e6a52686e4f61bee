use crate::error::{CoreError, Result};
use crate::nn::{Layer, Mode};
use crate::tensor::Tensor;

/// Elementwise max(0, x). The gradient at exactly zero is taken as zero.
pub struct Relu {
    name: String,
    active: Vec<bool>,
}

impl Relu {
    pub fn new(name: impl Into<String>) -> Relu {
        Relu {
            name: name.into(),
            active: Vec::new(),
        }
    }
}

impl Layer for Relu {
    fn name(&self) -> &str {
        &self.name
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        Ok(input.to_vec())
    }

    fn forward(&mut self, x: &Tensor, _mode: Mode) -> Result<Tensor> {
        self.active = x.data().iter().map(|v| *v > 0.0).collect();
        let data = x.data().iter().map(|v| v.max(0.0)).collect();
        Ok(Tensor::from_vec(x.shape(), data)?)
    }

    fn backward(&mut self, dy: &Tensor) -> Result<Tensor> {
        if dy.len() != self.active.len() {
            return Err(CoreError::Invalid(format!(
                "{}: backward called with {} values after forward saw {}",
                self.name,
                dy.len(),
                self.active.len()
            )));
        }
        let data = dy
            .data()
            .iter()
            .zip(&self.active)
            .map(|(g, a)| if *a { *g } else { 0.0 })
            .collect();
        Ok(Tensor::from_vec(dy.shape(), data)?)
    }
}
