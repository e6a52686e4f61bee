use crate::error::{CoreError, Result};
use crate::nn::ParamSet;
use std::collections::HashMap;

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

/// Adam optimizer with bias correction. Moment buffers are keyed by
/// parameter name, so the same optimizer can only drive one network.
pub struct Adam {
    lr: f64,
    t: u64,
    m: HashMap<String, Vec<f64>>,
    v: HashMap<String, Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64) -> Adam {
        Adam {
            lr,
            t: 0,
            m: HashMap::new(),
            v: HashMap::new(),
        }
    }

    /// Applies one update from the gradients currently stored in the
    /// network. Fails without touching `t` if any gradient is non-finite.
    pub fn step(&mut self, net: &mut dyn ParamSet) -> Result<()> {
        let mut bad: Option<String> = None;
        net.visit_params(&mut |slot| {
            if bad.is_none() && !slot.grad.data().iter().all(|g| g.is_finite()) {
                bad = Some(slot.name.to_string());
            }
        });
        if let Some(name) = bad {
            return Err(CoreError::NonFinite {
                context: format!("gradient of {name}"),
            });
        }
        self.t += 1;
        let bc1 = 1.0 - BETA1.powi(self.t as i32);
        let bc2 = 1.0 - BETA2.powi(self.t as i32);
        let lr = self.lr;
        let (ms, vs) = (&mut self.m, &mut self.v);
        net.visit_params(&mut |slot| {
            let n = slot.value.len();
            let m = ms.entry(slot.name.to_string()).or_insert_with(|| vec![0.0; n]);
            let v = vs.entry(slot.name.to_string()).or_insert_with(|| vec![0.0; n]);
            for i in 0..n {
                let g = slot.grad.data()[i];
                m[i] = BETA1 * m[i] + (1.0 - BETA1) * g;
                v[i] = BETA2 * v[i] + (1.0 - BETA2) * g * g;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                slot.value.data_mut()[i] -= lr * m_hat / (v_hat.sqrt() + EPS);
            }
        });
        Ok(())
    }
}
