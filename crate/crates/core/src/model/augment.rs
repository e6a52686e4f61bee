use crate::error::{CoreError, Result};
use crate::tensor::Tensor;
use rand::Rng;
use rand_distr::{Distribution, Normal};

/// The six window symmetries drawn from uniformly during augmentation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Symmetry {
    Identity,
    Rot90,
    Rot180,
    Rot270,
    FlipH,
    FlipV,
}

const SYMMETRIES: [Symmetry; 6] = [
    Symmetry::Identity,
    Symmetry::Rot90,
    Symmetry::Rot180,
    Symmetry::Rot270,
    Symmetry::FlipH,
    Symmetry::FlipV,
];

fn apply_symmetry(x: &Tensor, sym: Symmetry) -> Tensor {
    let (c, s) = (x.shape()[0], x.shape()[1]);
    let mut out = Tensor::zeros(x.shape());
    for ch in 0..c {
        for i in 0..s {
            for j in 0..s {
                let v = match sym {
                    Symmetry::Identity => x.at3(ch, i, j),
                    // Clockwise quarter turn: row i comes from column i
                    // counted bottom-up.
                    Symmetry::Rot90 => x.at3(ch, s - 1 - j, i),
                    Symmetry::Rot180 => x.at3(ch, s - 1 - i, s - 1 - j),
                    Symmetry::Rot270 => x.at3(ch, j, s - 1 - i),
                    Symmetry::FlipH => x.at3(ch, i, s - 1 - j),
                    Symmetry::FlipV => x.at3(ch, s - 1 - i, j),
                };
                *out.at3_mut(ch, i, j) = v;
            }
        }
    }
    out
}

/// Training-time window augmentation: one symmetry drawn uniformly from
/// {identity, three rotations, two mirrorings}, then elementwise Gaussian
/// noise with variance `noise_var`. The target and the raw channel means
/// are untouched by design, so only the normalized tensor is transformed.
pub fn augment(norm: &Tensor, noise_var: f64, rng: &mut impl Rng) -> Result<Tensor> {
    if norm.shape().len() != 3 || norm.shape()[1] != norm.shape()[2] {
        return Err(CoreError::Invalid(format!(
            "augmentation expects a square [C, S, S] window, got {:?}",
            norm.shape()
        )));
    }
    if !(noise_var.is_finite() && noise_var >= 0.0) {
        return Err(CoreError::Invalid(format!(
            "noise variance must be >= 0, got {noise_var}"
        )));
    }
    let sym = SYMMETRIES[rng.gen_range(0..SYMMETRIES.len())];
    let mut out = apply_symmetry(norm, sym);
    if noise_var > 0.0 {
        let dist = Normal::new(0.0, noise_var.sqrt()).expect("finite std");
        for v in out.data_mut() {
            *v += dist.sample(rng);
        }
    }
    Ok(out)
}
