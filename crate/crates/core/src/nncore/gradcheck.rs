//! Central-difference gradient verification.
//!
//! The numeric side only ever calls the training-mode forward pass and the
//! loss value, never [`Mlp::backprop`].

use super::loss::Loss;
use super::matrix::Matrix;
use super::mlp::{Mlp, Mode};
use crate::error::Result;

/// Default central-difference step.
pub const FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    /// Largest `|analytic - numeric| / max(|analytic|, |numeric|, floor)` over all parameters.
    pub max_rel_error: f64,
    pub params_checked: usize,
}

/// Loss value of a training-mode forward pass.
pub fn loss_value(model: &Mlp<f64>, batch: &Matrix<f64>, loss: &Loss<'_, f64>) -> Result<f64> {
    let trace = model.forward_trace(batch, Mode::Train)?;
    Ok(loss.evaluate(trace.output())?.0)
}

/// Compares backprop gradients against central differences with step `h`.
/// `floor` keeps near-zero gradients from dominating the relative error.
pub fn check_gradients(
    model: &Mlp<f64>,
    batch: &Matrix<f64>,
    loss: &Loss<'_, f64>,
    h: f64,
    floor: f64,
) -> Result<GradCheck> {
    let (_, analytic) = model.backward(batch, loss)?;
    let analytic: Vec<Vec<f64>> = analytic.slices().iter().map(|s| s.to_vec()).collect();

    let mut probe = model.clone();
    let mut max_rel: f64 = 0.0;
    let mut count = 0;
    for (block, grads) in analytic.iter().enumerate() {
        for (i, &a) in grads.iter().enumerate() {
            let orig = probe.params()[block][i];
            probe.params_mut()[block][i] = orig + h;
            let plus = loss_value(&probe, batch, loss)?;
            probe.params_mut()[block][i] = orig - h;
            let minus = loss_value(&probe, batch, loss)?;
            probe.params_mut()[block][i] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
            max_rel = max_rel.max(rel);
            count += 1;
        }
    }
    Ok(GradCheck {
        max_rel_error: max_rel,
        params_checked: count,
    })
}

/// Smallest absolute pre-activation feeding a ReLU, used to keep probes away from kinks.
pub fn min_relu_margin(model: &Mlp<f64>, batch: &Matrix<f64>) -> Result<f64> {
    use super::mlp::Activation;
    let trace = model.forward_trace(batch, Mode::Train)?;
    let mut margin = f64::INFINITY;
    let mut input = batch.clone();
    for (layer, out) in model.layers().iter().zip(trace.activations()) {
        if layer.spec.activation == Activation::Relu && layer.norm.is_none() {
            let mut z = input.matmul(&layer.weights)?;
            z.add_row_vector(&layer.bias);
            margin = z.data().iter().fold(margin, |m, v| m.min(v.abs()));
        }
        input = out.clone();
    }
    Ok(margin)
}
