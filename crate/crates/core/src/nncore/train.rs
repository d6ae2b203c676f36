use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::Loss;
use super::matrix::{Matrix, Scalar};
use super::mlp::{Mlp, Mode};
use super::optim::{LrSchedule, Optimizer, OptimizerConfig};
use crate::error::{dim_err, Error, Result};

/// Mini-batch training settings shared by every supervised network in the crate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub schedule: LrSchedule,
    #[serde(default)]
    pub weight_decay: f64,
    #[serde(default)]
    pub seed: u64,
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        Ok(())
    }
}

/// Supervision for [`fit`].
#[derive(Debug, Clone, Copy)]
pub enum Targets<'a, T> {
    Labels(&'a [usize]),
    Binary(&'a [T]),
    Values(&'a Matrix<T>),
}

impl<'a, T: Scalar> Targets<'a, T> {
    fn len(&self) -> usize {
        match self {
            Targets::Labels(l) => l.len(),
            Targets::Binary(b) => b.len(),
            Targets::Values(m) => m.rows(),
        }
    }
}

/// Trains `model` in place; returns the mean loss of each epoch.
pub fn fit<T: Scalar>(
    model: &mut Mlp<T>,
    x: &Matrix<T>,
    targets: Targets<'_, T>,
    cfg: &FitConfig,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    let n = x.rows();
    if n == 0 {
        return Err(Error::InsufficientData("empty training set".into()));
    }
    if targets.len() != n {
        return Err(dim_err(format!("{} targets for {n} rows", targets.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = Optimizer::from_config(&cfg.optimizer);
    let base_lr = cfg.optimizer.lr();
    let wd = T::of(cfg.weight_decay);
    let mut order: Vec<usize> = (0..n).collect();
    let mut curve = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        opt.set_lr(cfg.schedule.lr_at(epoch, base_lr));
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let xb = x.select_rows(chunk);
            let (lb, bb, vb);
            let loss = match targets {
                Targets::Labels(l) => {
                    lb = chunk.iter().map(|&i| l[i]).collect::<Vec<_>>();
                    Loss::CrossEntropy { labels: &lb }
                }
                Targets::Binary(b) => {
                    bb = chunk.iter().map(|&i| b[i]).collect::<Vec<_>>();
                    Loss::BinaryCrossEntropy { targets: &bb }
                }
                Targets::Values(m) => {
                    vb = m.select_rows(chunk);
                    Loss::Mse { target: &vb }
                }
            };
            let trace = model.forward_trace(&xb, Mode::Train)?;
            let (value, d_out) = loss.evaluate(trace.output())?;
            let (mut grads, _) = model.backprop(&trace, &d_out)?;
            if !grads.all_finite() {
                return Err(Error::Divergence(format!(
                    "non-finite gradient in epoch {epoch}"
                )));
            }
            if wd > T::zero() {
                for (g, layer) in grads.layers.iter_mut().zip(model.layers()) {
                    for (gw, &w) in g.weights.data_mut().iter_mut().zip(layer.weights.data()) {
                        *gw += wd * w;
                    }
                }
            }
            opt.apply(model, &grads)?;
            model.update_running_stats(&trace);
            total += value.f64() * chunk.len() as f64;
        }
        let mean = total / n as f64;
        if !mean.is_finite() {
            return Err(Error::Divergence(format!(
                "loss is {mean} in epoch {epoch}"
            )));
        }
        curve.push(mean);
    }
    Ok(curve)
}

/// Runs inference in fixed-size chunks to bound peak memory.
pub fn predict_batched<T: Scalar>(model: &Mlp<T>, x: &Matrix<T>) -> Result<Matrix<T>> {
    const CHUNK: usize = 512;
    if x.rows() <= CHUNK {
        return model.predict(x);
    }
    let mut data = Vec::with_capacity(x.rows() * model.output_dim());
    let idx: Vec<usize> = (0..x.rows()).collect();
    for c in idx.chunks(CHUNK) {
        data.extend(model.predict(&x.select_rows(c))?.into_data());
    }
    Matrix::from_vec(x.rows(), model.output_dim(), data)
}
