//! Adam with bias correction and decoupled, per-parameter weight decay.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig {
            lr,
            ..AdamConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate must be >= 0, got {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("Adam betas must lie in [0, 1)".into()));
        }
        if !(self.eps > 0.0) {
            return Err(Error::Config("Adam epsilon must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub config: AdamConfig,
    first: Vec<Matrix>,
    second: Vec<Matrix>,
    step: u64,
}

impl AdamState {
    pub fn new(config: AdamConfig, shapes: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        config.validate()?;
        let first: Vec<Matrix> = shapes.into_iter().map(|(r, c)| Matrix::zeros(r, c)).collect();
        Ok(AdamState {
            config,
            second: first.clone(),
            first,
            step: 0,
        })
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moments(&self) -> &[Matrix] {
        &self.first
    }

    pub fn second_moments(&self) -> &[Matrix] {
        &self.second
    }

    /// Zeroes both moments and the step counter.
    pub fn reset(&mut self) {
        for m in self.first.iter_mut().chain(self.second.iter_mut()) {
            m.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        self.step = 0;
    }

    /// One Adam update. `decay[i]` is the decoupled weight-decay rate of parameter
    /// `i` (0 disables it); after the Adam update the parameter is multiplied by
    /// `1 - lr * decay[i]`.
    pub fn step(&mut self, params: &mut [Matrix], grads: &[&Matrix], decay: &[f64]) -> Result<()> {
        let n = self.first.len();
        if params.len() != n || grads.len() != n || decay.len() != n {
            return Err(Error::Contract(format!(
                "Adam tracks {n} parameters; got {} params, {} grads, {} decay rates",
                params.len(),
                grads.len(),
                decay.len()
            )));
        }
        if let Some(bad) = decay.iter().find(|d| !(**d >= 0.0 && d.is_finite())) {
            return Err(Error::Config(format!("weight decay must be >= 0, got {bad}")));
        }
        self.config.validate()?;

        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);

        for i in 0..n {
            let p = &mut params[i];
            let g = grads[i];
            if p.shape() != g.shape() || p.shape() != self.first[i].shape() {
                return Err(Error::dim("adam_step", p.shape(), g.shape()));
            }
            let m = self.first[i].data_mut();
            let v = self.second[i].data_mut();
            let shrink = 1.0 - lr * decay[i];
            for (((pv, gv), mv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
                *mv = beta1 * *mv + (1.0 - beta1) * gv;
                *vv = beta2 * *vv + (1.0 - beta2) * gv * gv;
                let mhat = *mv / bc1;
                let vhat = *vv / bc2;
                *pv -= lr * mhat / (vhat.sqrt() + eps);
                if decay[i] != 0.0 {
                    *pv *= shrink;
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut s = AdamState::new(AdamConfig::default(), [(2, 2)]).unwrap();
        let mut p = vec![Matrix::filled(2, 2, 1.5)];
        let g = Matrix::zeros(2, 2);
        for _ in 0..5 {
            s.step(&mut p, &[&g], &[0.0]).unwrap();
        }
        assert_eq!(p[0], Matrix::filled(2, 2, 1.5));
        assert_eq!(s.step_count(), 5);
    }

    #[test]
    fn hand_stepped_reference() {
        // Three steps with gradients 0.5, -1.0, 2.0, executed by hand.
        let cfg = AdamConfig {
            lr: 0.1,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        };
        let mut s = AdamState::new(cfg, [(1, 1)]).unwrap();
        let mut p = vec![Matrix::filled(1, 1, 1.0)];
        let (mut m, mut v, mut x) = (0.0_f64, 0.0_f64, 1.0_f64);
        for (t, g) in [0.5_f64, -1.0, 2.0].into_iter().enumerate() {
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let mhat = m / (1.0 - 0.9_f64.powi(t as i32 + 1));
            let vhat = v / (1.0 - 0.999_f64.powi(t as i32 + 1));
            x -= 0.1 * mhat / (vhat.sqrt() + 1e-8);
            s.step(&mut p, &[&Matrix::filled(1, 1, g)], &[0.0]).unwrap();
            assert!((p[0][(0, 0)] - x).abs() < 1e-15);
        }
        // First step moves against the gradient by ~lr.
        let mut s = AdamState::new(cfg, [(1, 1)]).unwrap();
        let mut p = vec![Matrix::filled(1, 1, 0.0)];
        s.step(&mut p, &[&Matrix::filled(1, 1, 3.0)], &[0.0]).unwrap();
        assert!((p[0][(0, 0)] + 0.1).abs() < 1e-8);
    }

    #[test]
    fn decoupled_decay_is_multiplicative() {
        let mut s = AdamState::new(AdamConfig::with_lr(0.01), [(1, 3), (1, 1)]).unwrap();
        let mut p = vec![Matrix::row_vector(&[1.0, -2.0, 4.0]), Matrix::filled(1, 1, 1.0)];
        let g0 = Matrix::zeros(1, 3);
        let g1 = Matrix::zeros(1, 1);
        let mut expect = p[0].clone();
        for _ in 0..10 {
            s.step(&mut p, &[&g0, &g1], &[0.1, 0.0]).unwrap();
            expect.scale_in_place(1.0 - 0.001);
            assert_eq!(p[0], expect);
        }
        assert_eq!(p[1][(0, 0)], 1.0);
    }

    #[test]
    fn rejects_negative_rates() {
        assert!(AdamState::new(AdamConfig::with_lr(-1.0), [(1, 1)]).is_err());
        let mut s = AdamState::new(AdamConfig::default(), [(1, 1)]).unwrap();
        let mut p = vec![Matrix::zeros(1, 1)];
        let g = Matrix::zeros(1, 1);
        assert!(matches!(s.step(&mut p, &[&g], &[-0.1]), Err(Error::Config(_))));
    }
}
