use serde::{Deserialize, Serialize};

use super::{sub_seed, AttackContext};
use crate::confidence::ConfidenceVector;
use crate::error::{Error, Result};
use crate::nncore::{fit, predict_batched, Activation, Matrix, Targets};
use crate::purifier::Arm;

/// Floor applied before taking logs of confidences.
const LOG_FLOOR: f64 = 1e-30;

/// `ln max(p, 1e-30)` per entry. Saturated confidences keep their ordering
/// information in log space, where a small network can read it.
pub fn log_features(confs: &[ConfidenceVector]) -> Vec<Vec<f64>> {
    confs
        .iter()
        .map(|c| c.probs().iter().map(|&p| p.max(LOG_FLOOR).ln()).collect())
        .collect()
}

/// Column standardization fitted on the attacker's training rows.
struct Standardizer {
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl Standardizer {
    fn fit(rows: &[Vec<f64>]) -> Self {
        let d = rows[0].len();
        let n = rows.len() as f64;
        let mean: Vec<f64> = (0..d)
            .map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n)
            .collect();
        let scale = (0..d)
            .map(|j| {
                let var = rows.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n;
                var.sqrt().max(1e-6)
            })
            .collect();
        Self { mean, scale }
    }

    fn apply(&self, rows: &[Vec<f64>]) -> Result<Matrix<f32>> {
        let z: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| {
                r.iter()
                    .zip(&self.mean)
                    .zip(&self.scale)
                    .map(|((v, m), s)| (v - m) / s)
                    .collect()
            })
            .collect();
        Matrix::from_f64_rows(&z)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InversionResult {
    pub arm: Arm,
    pub seed: u64,
    /// Mean squared error per feature on the held-out rows.
    pub error: f64,
    pub wall_clock: f64,
}

/// Learns to map answers back to inputs on `train` rows and reports the
/// reconstruction error on `test` rows.
pub fn inversion_attack(
    ctx: &AttackContext<'_>,
    train: &[usize],
    test: &[usize],
) -> Result<InversionResult> {
    if train.is_empty() || test.is_empty() {
        return Err(Error::InsufficientData(
            "inversion needs training and test rows".into(),
        ));
    }
    let start = std::time::Instant::now();
    let seed = sub_seed(ctx.seed, 7);
    let train_in = log_features(&ctx.query_rows(train)?);
    let std = Standardizer::fit(&train_in);
    let x = std.apply(&train_in)?;
    let target: Matrix<f32> = ctx.ds.features(train);
    let mut model = ctx
        .attack_model
        .build(x.cols(), ctx.ds.d, Activation::Identity, seed)?;
    fit(
        &mut model,
        &x,
        Targets::Values(&target),
        &ctx.attack_model.fit_config(seed),
    )?;

    let recon = predict_batched(&model, &std.apply(&log_features(&ctx.query_rows(test)?))?)?;
    let mut sq = 0.0;
    for (r, &row) in recon.row_iter().zip(test) {
        for (&a, &b) in r.iter().zip(&ctx.ds.point(row).features) {
            sq += (a as f64 - b).powi(2);
        }
    }
    Ok(InversionResult {
        arm: ctx.arm,
        seed: ctx.seed,
        error: sq / (test.len() * ctx.ds.d) as f64,
        wall_clock: start.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeResult {
    pub arm: Arm,
    pub seed: u64,
    pub accuracy: f64,
    /// `1 / s`.
    pub chance: f64,
    pub wall_clock: f64,
}

/// Predicts the sensitive attribute from the answers: trained on the
/// attacker's auxiliary rows, scored on the evaluation rows.
pub fn attribute_attack(ctx: &AttackContext<'_>) -> Result<AttributeResult> {
    let s = ctx
        .ds
        .s
        .ok_or_else(|| Error::Config("dataset has no sensitive attribute".into()))?;
    let start = std::time::Instant::now();
    let seed = sub_seed(ctx.seed, 8);
    let (aux, _) = ctx.aux()?;
    let attr = |rows: &[usize]| {
        ctx.ds
            .sensitive(rows)
            .expect("dataset declares a sensitive attribute")
    };
    let train_in = log_features(&ctx.query_rows(&aux)?);
    let std = Standardizer::fit(&train_in);
    let mut model = ctx
        .attack_model
        .build(ctx.oracle.classes(), s, Activation::Softmax, seed)?;
    fit(
        &mut model,
        &std.apply(&train_in)?,
        Targets::Labels(&attr(&aux)),
        &ctx.attack_model.fit_config(seed),
    )?;
    let (m, n) = ctx.balanced_eval()?;
    let rows: Vec<usize> = m.iter().chain(n).copied().collect();
    let pred =
        predict_batched(&model, &std.apply(&log_features(&ctx.query_rows(&rows)?))?)?.argmax_rows();
    let hits = pred
        .iter()
        .zip(attr(&rows))
        .filter(|(p, a)| **p == *a)
        .count();
    Ok(AttributeResult {
        arm: ctx.arm,
        seed: ctx.seed,
        accuracy: hits as f64 / rows.len() as f64,
        chance: 1.0 / s as f64,
        wall_clock: start.elapsed().as_secs_f64(),
    })
}
