use crate::tensor::Tensor;
use rand::Rng;
use rand_distr::{Distribution, Normal};

/// He-style weight draw: Normal(0, sqrt(2 / fan_in)) per element.
pub fn he_normal(shape: &[usize], fan_in: usize, rng: &mut impl Rng) -> Tensor {
    assert!(fan_in > 0, "fan_in must be positive");
    let std = (2.0 / fan_in as f64).sqrt();
    let dist = Normal::new(0.0, std).expect("finite std");
    let len: usize = shape.iter().product();
    let data: Vec<f64> = (0..len).map(|_| dist.sample(rng)).collect();
    Tensor::from_vec(shape, data).expect("shape matches length")
}
