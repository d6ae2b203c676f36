//! The target classifier under attack.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::confidence::ConfidenceVector;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nncore::{
    fit, predict_batched, stack, Activation, FitConfig, Matrix, Mlp, OptimizerConfig, Targets,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    /// Hidden layer widths; input and output widths come from the data.
    pub hidden: Vec<usize>,
    pub activation: Activation,
    #[serde(default)]
    pub batch_norm: bool,
    #[serde(flatten)]
    pub fit: FitConfig,
    /// When set, the report states whether `acc_train - acc_test` reached it.
    #[serde(default)]
    pub min_overfit_gap: Option<f64>,
}

impl ClassifierConfig {
    /// Four dense layers trained long enough to memorize the training set.
    pub fn desk_overfit(seed: u64) -> Self {
        Self {
            hidden: vec![128, 64, 32],
            activation: Activation::Relu,
            batch_norm: false,
            fit: FitConfig {
                epochs: 100,
                batch_size: 64,
                optimizer: OptimizerConfig::adam(1e-3),
                schedule: Default::default(),
                weight_decay: 0.0,
                seed,
            },
            min_overfit_gap: Some(0.05),
        }
    }

    pub fn layer_sizes(&self, input: usize, classes: usize) -> Vec<usize> {
        let mut sizes = vec![input];
        sizes.extend(&self.hidden);
        sizes.push(classes);
        sizes
    }

    pub fn build(&self, input: usize, classes: usize) -> Result<Mlp<f32>> {
        Mlp::new(
            stack(
                &self.layer_sizes(input, classes),
                self.activation,
                Activation::Softmax,
                self.batch_norm,
            ),
            self.fit.seed,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub acc_train: f64,
    pub acc_test: f64,
    pub loss_curve: Vec<f64>,
    #[serde(default)]
    pub overfit_gap_met: Option<bool>,
    /// Wall-clock seconds; excluded from equality-sensitive artifacts.
    pub train_seconds: f64,
}

/// Trains on `train` rows and reports accuracy on `train` and `test` rows.
pub fn train_target(
    cfg: &ClassifierConfig,
    ds: &Dataset,
    train: &[usize],
    test: &[usize],
) -> Result<(Mlp<f32>, TrainReport)> {
    cfg.fit.validate()?;
    if train.is_empty() {
        return Err(Error::InsufficientData("empty training set".into()));
    }
    train_on(cfg, &ds.features(train), &ds.labels(train), ds.d, ds.k).and_then(
        |(model, curve, secs)| {
            let acc_train = accuracy(&model, ds, train)?;
            let acc_test = if test.is_empty() {
                0.0
            } else {
                accuracy(&model, ds, test)?
            };
            Ok((
                model,
                TrainReport {
                    acc_train,
                    acc_test,
                    loss_curve: curve,
                    overfit_gap_met: cfg.min_overfit_gap.map(|g| acc_train - acc_test >= g),
                    train_seconds: secs,
                },
            ))
        },
    )
}

/// Trains a classifier on an explicit feature matrix and label list.
pub fn train_on(
    cfg: &ClassifierConfig,
    x: &Matrix<f32>,
    labels: &[usize],
    input: usize,
    classes: usize,
) -> Result<(Mlp<f32>, Vec<f64>, f64)> {
    let start = Instant::now();
    let mut model = cfg.build(input, classes)?;
    let curve = fit(&mut model, x, Targets::Labels(labels), &cfg.fit)?;
    Ok((model, curve, start.elapsed().as_secs_f64()))
}

pub fn accuracy(model: &Mlp<f32>, ds: &Dataset, idx: &[usize]) -> Result<f64> {
    if idx.is_empty() {
        return Err(Error::InsufficientData("accuracy over no rows".into()));
    }
    let pred = predict_batched(model, &ds.features(idx))?.argmax_rows();
    let correct = pred
        .iter()
        .zip(ds.labels(idx))
        .filter(|(p, l)| **p == *l)
        .count();
    Ok(correct as f64 / idx.len() as f64)
}

/// Confidence vector for one input.
pub fn predict_confidence(model: &Mlp<f32>, x: &[f64]) -> Result<ConfidenceVector> {
    let m = Matrix::<f32>::from_f64_rows(&[x])?;
    Ok(predict_confidence_batch(model, &m)?.pop().expect("one row"))
}

/// Confidence vectors for a batch. Scores are computed in f32 and widened
/// exactly, so they survive f32 storage bit for bit.
pub fn predict_confidence_batch(
    model: &Mlp<f32>,
    x: &Matrix<f32>,
) -> Result<Vec<ConfidenceVector>> {
    let out = predict_batched(model, x)?;
    out.row_iter()
        .map(|r| ConfidenceVector::new(r.iter().map(|&v| v as f64).collect()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synthesize, Generator, SynthSpec};
    use approx::assert_abs_diff_eq;

    fn blobs() -> Dataset {
        synthesize(&SynthSpec {
            name: "blobs".into(),
            n: 200,
            k: 2,
            d: 2,
            generator: Generator::Gaussian {
                separation: 1.0,
                scale: 0.1,
            },
            label_noise: 0.0,
            sensitive: None,
            blend: 0.0,
            seed: 11,
        })
        .unwrap()
    }

    fn small_cfg(epochs: usize) -> ClassifierConfig {
        ClassifierConfig {
            hidden: vec![16],
            activation: Activation::Relu,
            batch_norm: false,
            fit: FitConfig {
                epochs,
                batch_size: 16,
                optimizer: OptimizerConfig::adam(0.01),
                schedule: Default::default(),
                weight_decay: 0.0,
                seed: 1,
            },
            min_overfit_gap: None,
        }
    }

    #[test]
    fn separable_toy_is_learned() {
        let ds = blobs();
        let idx = ds.all_indices();
        let (_, report) = train_target(&small_cfg(50), &ds, &idx[..100], &idx[100..]).unwrap();
        assert!(report.acc_train >= 0.99, "{report:?}");
        assert_eq!(report.loss_curve.len(), 50);
    }

    #[test]
    fn zero_epochs_rejected() {
        let ds = blobs();
        let idx = ds.all_indices();
        assert!(matches!(
            train_target(&small_cfg(0), &ds, &idx[..10], &idx[10..20]),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn confidences_are_consistent() {
        let ds = blobs();
        let idx = ds.all_indices();
        let (model, report) = train_target(&small_cfg(5), &ds, &idx[..100], &idx[100..]).unwrap();
        let batch = predict_confidence_batch(&model, &ds.features(&idx[..20])).unwrap();
        for (i, c) in batch.iter().enumerate() {
            assert!(c.probs().iter().all(|&p| p >= 0.0));
            assert_abs_diff_eq!(c.probs().iter().sum::<f64>(), 1.0, epsilon = 1e-6);
            let single = predict_confidence(&model, &ds.point(idx[i]).features).unwrap();
            assert_eq!(&single, c);
        }
        // the report is recomputable from the stored model
        assert_eq!(
            accuracy(&model, &ds, &idx[..100]).unwrap(),
            report.acc_train
        );
        assert!(predict_confidence(&model, &[1.0]).is_err());
    }
}
