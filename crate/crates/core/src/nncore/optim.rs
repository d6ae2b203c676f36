use serde::{Deserialize, Serialize};

use super::matrix::Scalar;
use super::mlp::{Gradients, Mlp};
use crate::error::{dim_err, Error, Result};

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerConfig {
    Sgd {
        lr: f64,
    },
    Adam {
        lr: f64,
        #[serde(default = "default_beta1")]
        beta1: f64,
        #[serde(default = "default_beta2")]
        beta2: f64,
        #[serde(default = "default_eps")]
        eps: f64,
    },
}

impl OptimizerConfig {
    pub fn adam(lr: f64) -> Self {
        OptimizerConfig::Adam {
            lr,
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_eps(),
        }
    }

    pub fn lr(&self) -> f64 {
        match *self {
            OptimizerConfig::Sgd { lr } | OptimizerConfig::Adam { lr, .. } => lr,
        }
    }
}

/// Moment estimates for bias-corrected Adam.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub first: Vec<Vec<T>>,
    pub second: Vec<Vec<T>>,
    pub step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            first: Vec::new(),
            second: Vec::new(),
            step: 0,
            lr,
            beta1,
            beta2,
            eps,
        }
    }

    fn update(&mut self, params: &mut [&mut [T]], grads: &[&[T]]) {
        if self.first.is_empty() {
            self.first = params.iter().map(|p| vec![T::zero(); p.len()]).collect();
            self.second = self.first.clone();
        }
        self.step += 1;
        let (b1, b2) = (T::of(self.beta1), T::of(self.beta2));
        let c1 = T::of(1.0 - self.beta1.powi(self.step as i32));
        let c2 = T::of(1.0 - self.beta2.powi(self.step as i32));
        let lr = T::of(self.lr);
        let eps = T::of(self.eps);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(self.first.iter_mut())
            .zip(self.second.iter_mut())
        {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (T::one() - b1) * g[i];
                v[i] = b2 * v[i] + (T::one() - b2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Optimizer<T> {
    Sgd { lr: f64 },
    Adam(AdamState<T>),
}

impl<T: Scalar> Optimizer<T> {
    pub fn from_config(cfg: &OptimizerConfig) -> Self {
        match *cfg {
            OptimizerConfig::Sgd { lr } => Optimizer::Sgd { lr },
            OptimizerConfig::Adam {
                lr,
                beta1,
                beta2,
                eps,
            } => Optimizer::Adam(AdamState::new(lr, beta1, beta2, eps)),
        }
    }

    pub fn set_lr(&mut self, new_lr: f64) {
        match self {
            Optimizer::Sgd { lr } => *lr = new_lr,
            Optimizer::Adam(s) => s.lr = new_lr,
        }
    }

    /// One update of `params` from `grads`; shapes must match pairwise.
    pub fn step(&mut self, params: &mut [&mut [T]], grads: &[&[T]]) -> Result<()> {
        if params.len() != grads.len() || params.iter().zip(grads).any(|(p, g)| p.len() != g.len())
        {
            return Err(dim_err("parameter and gradient shapes differ"));
        }
        if grads.iter().any(|g| g.iter().any(|v| !v.is_finite())) {
            return Err(Error::NonFinite("gradient".into()));
        }
        match self {
            Optimizer::Sgd { lr } => {
                let lr = T::of(*lr);
                for (p, g) in params.iter_mut().zip(grads) {
                    for (x, &d) in p.iter_mut().zip(g.iter()) {
                        *x -= lr * d;
                    }
                }
            }
            Optimizer::Adam(state) => {
                if !state.first.is_empty()
                    && (state.first.len() != params.len()
                        || state
                            .first
                            .iter()
                            .zip(params.iter())
                            .any(|(m, p)| m.len() != p.len()))
                {
                    return Err(dim_err("Adam moments do not match parameters"));
                }
                state.update(params, grads);
            }
        }
        Ok(())
    }

    pub fn apply(&mut self, model: &mut Mlp<T>, grads: &Gradients<T>) -> Result<()> {
        let g = grads.slices();
        let mut p = model.params_mut();
        self.step(&mut p, &g)
    }
}

/// Piecewise-constant learning rate: `(from_epoch, lr)` pairs in ascending order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    #[serde(default)]
    pub milestones: Vec<(usize, f64)>,
}

impl LrSchedule {
    pub fn lr_at(&self, epoch: usize, base: f64) -> f64 {
        self.milestones
            .iter()
            .rfind(|(from, _)| *from <= epoch)
            .map_or(base, |&(_, lr)| lr)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn sgd_step() {
        let mut opt = Optimizer::<f64>::Sgd { lr: 0.1 };
        let mut theta = [1.0];
        opt.step(&mut [&mut theta[..]], &[&[2.0][..]]).unwrap();
        assert_abs_diff_eq!(theta[0], 0.8, epsilon = 1e-15);
    }

    #[test]
    fn first_adam_step_moves_by_lr() {
        // m_hat = v_hat = g after bias correction, so the step is lr * g / (|g| + eps)
        let mut opt = Optimizer::<f64>::from_config(&OptimizerConfig::adam(0.01));
        let mut theta = vec![0.5; 4];
        opt.step(&mut [&mut theta[..]], &[&[1.0; 4][..]]).unwrap();
        for &t in &theta {
            assert_abs_diff_eq!(0.5 - t, 0.01 / (1.0 + 1e-8), epsilon = 1e-15);
        }
    }

    #[test]
    fn zero_gradient_leaves_params() {
        for cfg in [OptimizerConfig::Sgd { lr: 0.3 }, OptimizerConfig::adam(0.3)] {
            let mut opt = Optimizer::<f64>::from_config(&cfg);
            let mut theta = vec![1.5, -2.0];
            for _ in 0..3 {
                opt.step(&mut [&mut theta[..]], &[&[0.0, 0.0][..]]).unwrap();
            }
            assert_eq!(theta, vec![1.5, -2.0]);
        }
    }

    #[test]
    fn rejects_nan_and_shape_mismatch() {
        let mut opt = Optimizer::<f64>::from_config(&OptimizerConfig::adam(0.1));
        let mut theta = [0.0; 2];
        assert!(matches!(
            opt.step(&mut [&mut theta[..]], &[&[f64::NAN, 0.0][..]]),
            Err(Error::NonFinite(_))
        ));
        assert!(opt.step(&mut [&mut theta[..]], &[&[0.0][..]]).is_err());
    }

    #[test]
    fn schedule_picks_latest_milestone() {
        let s = LrSchedule {
            milestones: vec![(150, 0.01), (250, 0.001)],
        };
        assert_eq!(s.lr_at(0, 0.1), 0.1);
        assert_eq!(s.lr_at(150, 0.1), 0.01);
        assert_eq!(s.lr_at(349, 0.1), 0.001);
    }
}
