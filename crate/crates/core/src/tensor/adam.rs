use serde::{Deserialize, Serialize};

use super::{Tensor, TensorError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// The learning rate is halved after every `halving_interval` steps.
    pub halving_interval: u64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8, halving_interval: 2000 }
    }
}

/// First and second moment estimates for a list of parameter tensors.
#[derive(Clone, Debug)]
pub struct AdamState {
    config: AdamConfig,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
    step: u64,
}

impl AdamState {
    pub fn new<'a>(config: AdamConfig, params: impl IntoIterator<Item = &'a Tensor>) -> Self {
        let first: Vec<Tensor> = params.into_iter().map(|p| Tensor::zeros(p.shape())).collect();
        let second = first.clone();
        Self { config, first, second, step: 0 }
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    /// Number of completed steps.
    pub fn timestep(&self) -> u64 {
        self.step
    }

    /// Learning rate the next step will use.
    pub fn current_lr(&self) -> f64 {
        let halvings = if self.config.halving_interval == 0 {
            0
        } else {
            self.step / self.config.halving_interval
        };
        self.config.learning_rate * 0.5f64.powi(halvings.min(i32::MAX as u64) as i32)
    }

    /// One bias-corrected Adam update, in place.
    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[Tensor]) -> Result<(), TensorError> {
        if params.len() != self.first.len() || grads.len() != self.first.len() {
            return Err(TensorError::Dimension(format!(
                "adam tracks {} tensors, got {} params and {} grads",
                self.first.len(),
                params.len(),
                grads.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != g.shape() || p.shape() != self.first[i].shape() {
                return Err(TensorError::Dimension(format!(
                    "adam slot {i}: param {:?}, grad {:?}, moments {:?}",
                    p.shape(),
                    g.shape(),
                    self.first[i].shape()
                )));
            }
        }
        let lr = self.current_lr();
        self.step += 1;
        let AdamConfig { beta1, beta2, epsilon, .. } = self.config;
        let c1 = 1.0 - beta1.powf(self.step as f64);
        let c2 = 1.0 - beta2.powf(self.step as f64);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.first.iter_mut().zip(self.second.iter_mut()))
        {
            for (((pv, &gv), mv), vv) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut().iter_mut())
                .zip(v.data_mut().iter_mut())
            {
                *mv = beta1 * *mv + (1.0 - beta1) * gv;
                *vv = beta2 * *vv + (1.0 - beta2) * gv * gv;
                let m_hat = *mv / c1;
                let v_hat = *vv / c2;
                *pv -= lr * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params_bit_identical() {
        let mut p = Tensor::vector(vec![0.1, -2.5, 3.75]).unwrap();
        let before = p.clone();
        let mut adam = AdamState::new(AdamConfig::default(), [&p]);
        let g = Tensor::zeros(&[3]);
        for _ in 0..50 {
            adam.step(&mut [&mut p], std::slice::from_ref(&g)).unwrap();
        }
        assert_eq!(p, before);
        assert_eq!(adam.timestep(), 50);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = Tensor::scalar(1.0);
        let cfg = AdamConfig { learning_rate: 1e-3, ..Default::default() };
        let mut adam = AdamState::new(cfg, [&p]);
        adam.step(&mut [&mut p], &[Tensor::scalar(1.0)]).unwrap();
        // m_hat = v_hat = 1 at t = 1
        let expected = 1.0 - 1e-3 / (1.0 + 1e-8);
        assert!((p.data()[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn learning_rate_halves_at_interval() {
        let p = Tensor::scalar(0.0);
        let cfg = AdamConfig { learning_rate: 0.01, halving_interval: 3, ..Default::default() };
        let mut adam = AdamState::new(cfg, [&p]);
        let mut q = p.clone();
        let mut lrs = Vec::new();
        for _ in 0..7 {
            lrs.push(adam.current_lr());
            adam.step(&mut [&mut q], &[Tensor::scalar(0.0)]).unwrap();
        }
        assert_eq!(lrs, vec![0.01, 0.01, 0.01, 0.005, 0.005, 0.005, 0.0025]);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut p = Tensor::zeros(&[2]);
        let mut adam = AdamState::new(AdamConfig::default(), [&p]);
        let err = adam.step(&mut [&mut p], &[Tensor::zeros(&[3])]);
        assert!(matches!(err, Err(TensorError::Dimension(_))));
    }
}
