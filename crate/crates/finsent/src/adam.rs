//! Adam optimizer with bias correction.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Optimizer state: per-parameter first and second moment estimates plus the
/// shared step counter and hyperparameters.
pub struct AdamState {
    pub step_count: u64,
    pub learning_rate: f64,
    pub epsilon: f64,
    pub beta1: f64,
    pub beta2: f64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    /// Defaults: lr 1e-5, epsilon 1e-6, beta1 0.9, beta2 0.999.
    pub fn new(params: &[Tensor], learning_rate: f64, epsilon: f64) -> AdamState {
        assert!(learning_rate > 0.0 && epsilon > 0.0);
        AdamState {
            step_count: 0,
            learning_rate,
            epsilon,
            beta1: 0.9,
            beta2: 0.999,
            m: params.iter().map(|p| vec![0.0; p.numel()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.numel()]).collect(),
        }
    }

    pub fn with_defaults(params: &[Tensor]) -> AdamState {
        Self::new(params, 1e-5, 1e-6)
    }

    /// One Adam update over all parameters. Every parameter must have a
    /// populated gradient; gradients are left untouched for the caller to
    /// reset.
    pub fn step(&mut self, params: &[Tensor]) -> Result<()> {
        self.step_named(params, |i| format!("param[{}]", i))
    }

    pub fn step_named(
        &mut self,
        params: &[Tensor],
        name_of: impl Fn(usize) -> String,
    ) -> Result<()> {
        assert_eq!(params.len(), self.m.len(), "parameter list changed size");
        for (i, p) in params.iter().enumerate() {
            if p.grad().is_none() {
                return Err(Error::MissingGrad { name: name_of(i) });
            }
        }
        self.step_count += 1;
        let t = self.step_count as f64;
        let bc1 = 1.0 - self.beta1.powf(t);
        let bc2 = 1.0 - self.beta2.powf(t);
        for (i, p) in params.iter().enumerate() {
            let grad = p.grad().expect("checked above");
            let mut data = p.data();
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            for j in 0..data.len() {
                let g = grad[j];
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g;
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g * g;
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                data[j] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
            }
            p.set_data(data);
        }
        Ok(())
    }
}
