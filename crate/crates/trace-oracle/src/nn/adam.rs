//! Adam optimizer with bias-corrected first and second moments.
//!
//! Per tensor element, with step count `t` starting at 1:
//!
//! ```text
//! m = b1*m + (1-b1)*g          v = b2*v + (1-b2)*g^2
//! m^ = m/(1-b1^t)              v^ = v/(1-b2^t)
//! theta -= lr * m^ / (sqrt(v^) + eps)
//! ```

use serde::{Deserialize, Serialize};

use super::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 8e-6, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Moment estimates for one parameter list, in the same canonical order as
/// the parameters themselves.
#[derive(Debug, Clone)]
pub struct AdamState {
    cfg: AdamConfig,
    step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl AdamState {
    /// Fresh zero-moment state shaped like `params`.
    pub fn new(cfg: AdamConfig, params: &[&Tensor]) -> Self {
        let m = params.iter().map(|t| Tensor::zeros(t.rows, t.cols)).collect();
        let v = params.iter().map(|t| Tensor::zeros(t.rows, t.cols)).collect();
        AdamState { cfg, step: 0, m, v }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one update in place. `params` and `grads` must be in the same
    /// canonical order and shapes as at construction.
    pub fn apply(&mut self, params: Vec<&mut Tensor>, grads: &[Tensor]) {
        assert_eq!(params.len(), self.m.len(), "parameter list changed shape");
        assert_eq!(grads.len(), self.m.len(), "gradient list changed shape");
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.cfg.beta1.powi(t);
        let bc2 = 1.0 - self.cfg.beta2.powi(t);
        for (k, theta) in params.into_iter().enumerate() {
            debug_assert_eq!(theta.len(), grads[k].len());
            for e in 0..theta.data.len() {
                let g = grads[k].data[e];
                let m = &mut self.m[k].data[e];
                let v = &mut self.v[k].data[e];
                *m = self.cfg.beta1 * *m + (1.0 - self.cfg.beta1) * g;
                *v = self.cfg.beta2 * *v + (1.0 - self.cfg.beta2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                theta.data[e] -= self.cfg.lr * m_hat / (v_hat.sqrt() + self.cfg.eps);
            }
        }
    }
}
