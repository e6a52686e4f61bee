use crate::error::{CoreError, Result};
use crate::nn::{Layer, Mode};
use crate::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Inverted dropout: in training each value is kept with probability
/// `1 - rate` and scaled by `1 / (1 - rate)`, so evaluation is the
/// identity with no rescaling.
pub struct Dropout {
    name: String,
    rate: f64,
    rng: ChaCha8Rng,
    /// Keep-mask of the last training forward (scaled), empty after eval.
    mask: Vec<f64>,
    last_mode: Option<Mode>,
}

impl Dropout {
    pub fn new(name: impl Into<String>, rate: f64, seed: u64) -> Result<Dropout> {
        let name = name.into();
        if !(0.0..1.0).contains(&rate) {
            return Err(CoreError::Build {
                layer: name,
                message: format!("dropout rate must lie in [0, 1), got {rate}"),
            });
        }
        Ok(Dropout {
            name,
            rate,
            rng: ChaCha8Rng::seed_from_u64(seed),
            mask: Vec::new(),
            last_mode: None,
        })
    }
}

impl Layer for Dropout {
    fn name(&self) -> &str {
        &self.name
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        Ok(input.to_vec())
    }

    fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        self.last_mode = Some(mode);
        match mode {
            Mode::Eval => {
                self.mask.clear();
                Ok(x.clone())
            }
            Mode::Train => {
                let keep = 1.0 - self.rate;
                let scale = 1.0 / keep;
                self.mask = (0..x.len())
                    .map(|_| {
                        if self.rng.gen::<f64>() < keep {
                            scale
                        } else {
                            0.0
                        }
                    })
                    .collect();
                let data = x
                    .data()
                    .iter()
                    .zip(&self.mask)
                    .map(|(v, m)| v * m)
                    .collect();
                Ok(Tensor::from_vec(x.shape(), data)?)
            }
        }
    }

    fn backward(&mut self, dy: &Tensor) -> Result<Tensor> {
        match self.last_mode {
            None => Err(CoreError::Invalid(format!(
                "{}: backward before forward",
                self.name
            ))),
            Some(Mode::Eval) => Ok(dy.clone()),
            Some(Mode::Train) => {
                if dy.len() != self.mask.len() {
                    return Err(CoreError::Invalid(format!(
                        "{}: gradient has {} values, expected {}",
                        self.name,
                        dy.len(),
                        self.mask.len()
                    )));
                }
                let data = dy
                    .data()
                    .iter()
                    .zip(&self.mask)
                    .map(|(g, m)| g * m)
                    .collect();
                Ok(Tensor::from_vec(dy.shape(), data)?)
            }
        }
    }
}
