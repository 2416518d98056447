use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Moment estimates for one parameter list.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    shapes: Vec<Vec<usize>>,
}

impl AdamState {
    pub fn new(config: AdamConfig, params: &[Tensor]) -> Self {
        Self {
            config,
            step: 0,
            first: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            second: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            shapes: params.iter().map(|p| p.shape().to_vec()).collect(),
        }
    }

    /// One bias-corrected Adam update of `params` in place.
    pub fn step(&mut self, params: &mut [Tensor], grads: &[Tensor]) -> Result<()> {
        if params.len() != self.shapes.len() || grads.len() != self.shapes.len() {
            return Err(Error::ShapeMismatch {
                op: "adam",
                detail: format!(
                    "state has {} tensors, got {} params and {} grads",
                    self.shapes.len(),
                    params.len(),
                    grads.len()
                ),
            });
        }
        for ((p, g), s) in params.iter().zip(grads).zip(&self.shapes) {
            if p.shape() != s.as_slice() || g.shape() != s.as_slice() {
                return Err(Error::ShapeMismatch {
                    op: "adam",
                    detail: format!("param {:?}, grad {:?}, state {s:?}", p.shape(), g.shape()),
                });
            }
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.first.iter_mut().zip(self.second.iter_mut())) {
            for (((pi, &gi), mi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = beta1 * *mi + (1.0 - beta1) * gi;
                *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                *pi -= lr * (*mi / c1) / ((*vi / c2).sqrt() + eps);
            }
        }
        Ok(())
    }
}

pub fn adam_step(params: &mut [Tensor], grads: &[Tensor], state: &mut AdamState) -> Result<()> {
    state.step(params, grads)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut params = vec![Tensor::vector(vec![1.0, -2.0])];
        let mut state = AdamState::new(AdamConfig::default(), &params);
        adam_step(&mut params, &[Tensor::zeros(&[2])], &mut state).unwrap();
        assert_eq!(params[0].data(), &[1.0, -2.0]);
        assert_eq!(state.step, 1);
    }

    #[test]
    fn first_step_moves_by_lr() {
        for g in [3.0, -0.25, 1e-3] {
            let mut params = vec![Tensor::scalar(0.5)];
            let cfg = AdamConfig { lr: 0.01, ..Default::default() };
            let mut state = AdamState::new(cfg, &params);
            adam_step(&mut params, &[Tensor::scalar(g)], &mut state).unwrap();
            let delta = params[0].item() - 0.5;
            let expected = 0.01 * g.abs() / ((g * g).sqrt() + 1e-8);
            assert!((delta.abs() - expected).abs() < 1e-15);
            assert_eq!(delta.signum(), -g.signum());
        }
    }

    #[test]
    fn deterministic_and_shape_checked() {
        let run = || {
            let mut p = vec![Tensor::vector(vec![0.1, 0.2, 0.3])];
            let mut s = AdamState::new(AdamConfig::default(), &p);
            for k in 0..5 {
                let g = Tensor::vector(vec![k as f64, -1.0, 0.5]);
                s.step(&mut p, &[g]).unwrap();
            }
            (p, s)
        };
        assert_eq!(run(), run());
        let (mut p, mut s) = run();
        assert!(s.step(&mut p, &[Tensor::zeros(&[2])]).is_err());
    }
}
