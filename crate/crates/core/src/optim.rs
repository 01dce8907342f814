//! Adam with L2 weight decay folded into the gradient.

use serde::{Deserialize, Serialize};

use crate::tensor::{Real, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// Moment estimates for a fixed, ordered list of parameters.
#[derive(Clone)]
pub struct AdamState<R> {
    pub config: AdamConfig,
    m: Vec<Tensor<R>>,
    v: Vec<Tensor<R>>,
    t: u64,
}

impl<R: Real> AdamState<R> {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            m: Vec::new(),
            v: Vec::new(),
            t: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// One update of every parameter in place. `params` and `grads` must keep
    /// the same order and shapes across calls.
    pub fn step(&mut self, params: &mut [&mut Tensor<R>], grads: &[Tensor<R>]) {
        assert_eq!(params.len(), grads.len(), "one gradient per parameter");
        if self.m.is_empty() {
            self.m = params.iter().map(|p| Tensor::zeros(p.rows(), p.cols())).collect();
            self.v = self.m.clone();
        }
        assert_eq!(self.m.len(), params.len(), "parameter list changed between steps");
        self.t += 1;
        let c = self.config;
        let (b1, b2) = (R::from_f64_lossy(c.beta1), R::from_f64_lossy(c.beta2));
        let wd = R::from_f64_lossy(c.weight_decay);
        let eps = R::from_f64_lossy(c.eps);
        let t = i32::try_from(self.t).unwrap_or(i32::MAX);
        let bias1 = R::one() - b1.powi(t);
        let bias2 = R::one() - b2.powi(t);
        let lr = R::from_f64_lossy(c.lr);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            assert_eq!(p.shape(), g.shape(), "gradient shape");
            let p = p.data_mut();
            for k in 0..p.len() {
                let grad = g.data()[k] + wd * p[k];
                let mk = b1 * m.data()[k] + (R::one() - b1) * grad;
                let vk = b2 * v.data()[k] + (R::one() - b2) * grad * grad;
                m.data_mut()[k] = mk;
                v.data_mut()[k] = vk;
                let m_hat = mk / bias1;
                let v_hat = vk / bias2;
                p[k] = p[k] - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_without_decay_leaves_params() {
        let mut p = Tensor::from_vec(1, 3, vec![0.5, -1.0, 2.0]).unwrap();
        let before = p.clone();
        let mut adam = AdamState::new(AdamConfig::default());
        for _ in 0..3 {
            adam.step(&mut [&mut p], &[Tensor::zeros(1, 3)]);
        }
        assert_eq!(p, before);
        assert_eq!(adam.step_count(), 3);
    }

    #[test]
    fn first_step_moves_by_lr_against_gradient_sign() {
        for &g in &[3.7, -0.02, 1e-3] {
            let mut p = Tensor::scalar(1.0f64);
            let mut adam = AdamState::new(AdamConfig {
                lr: 0.01,
                ..AdamConfig::default()
            });
            adam.step(&mut [&mut p], &[Tensor::scalar(g)]);
            // m̂ = g and v̂ = g², so the step is lr·g/(|g| + ε).
            let expected = 1.0 - 0.01 * g / (g.abs() + 1e-8);
            assert!((p.item().unwrap() - expected).abs() < 1e-15);
            assert!((p.item().unwrap() - (1.0 - 0.01 * g.signum())).abs() < 1e-7);
        }
    }

    #[test]
    fn weight_decay_enters_as_l2_gradient() {
        let mut p = Tensor::scalar(2.0f64);
        let mut adam = AdamState::new(AdamConfig {
            lr: 0.1,
            weight_decay: 0.5,
            ..AdamConfig::default()
        });
        adam.step(&mut [&mut p], &[Tensor::scalar(0.0)]);
        // gradient becomes wd·p = 1 > 0, so the first step is −lr.
        assert!((p.item().unwrap() - 1.9).abs() < 1e-7);
    }
}
