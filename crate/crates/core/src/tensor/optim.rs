use super::ParamSet;
use crate::error::{Error, Result};

/// Adam with bias correction. Parameters that received no gradient since the
/// last step are left untouched, including their step counts.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for Adam {
    fn default() -> Self {
        Adam {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl Adam {
    /// Applies one update from the accumulated gradients and clears them.
    pub fn step(&self, params: &mut ParamSet) -> Result<()> {
        if !params.has_grads() {
            return Err(Error::usage("adam step without gradients; run a backward pass first"));
        }
        for p in params.params_mut() {
            if p.grad().is_none() {
                continue;
            }
            p.step += 1;
            let t = p.step as i32;
            let c1 = 1.0 - self.beta1.powi(t);
            let c2 = 1.0 - self.beta2.powi(t);
            let (value, grad, m, v) = p.parts_mut();
            let grad = grad.expect("checked above");
            for (((w, &g), mi), vi) in value
                .data_mut()
                .iter_mut()
                .zip(grad.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * g;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * g * g;
                let m_hat = *mi / c1;
                let v_hat = *vi / c2;
                *w -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
            p.take_grad();
        }
        Ok(())
    }
}
