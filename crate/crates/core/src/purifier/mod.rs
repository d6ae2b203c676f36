//! The defense: a conditional autoencoder that rewrites confidence vectors,
//! and a label swapper that exchanges the top two scores for a fixed subset
//! of training members recognized through a nearest-neighbour index.
//!
//! Inference is `c = F(x)`, `p = G(c | argmax c)`, then `p` has its top two
//! entries exchanged when `c` matches the index. Latent noise is drawn from a
//! generator seeded by the bytes of `c`, so the whole pipeline is a pure
//! function of the target's output.

mod bundle;
mod reformer;
mod swapper;

pub use bundle::{
    read_index, train_purifier, train_purifier_on, write_index, Arm, Flags, PurifierBundle,
    PurifierConfig, PurifierReport, INDEX_MAGIC,
};
pub use reformer::{noise_seed, train_reformer_on, ConfidenceReformer, CvaeConfig, NoiseMode};
pub use swapper::{
    build_index, calibrate_tau, compute_swap_rate, l2, round_half_up, swap_label, KnnParams,
    PredictionIndex, SwapPlan,
};

use crate::confidence::ConfidenceVector;
use crate::data::Dataset;
use crate::error::Result;
use crate::nncore::Mlp;
use crate::target::predict_confidence_batch;

/// Trains a reformer on the target's confidences over the reference rows.
pub fn train_reformer(
    model: &Mlp<f32>,
    ds: &Dataset,
    reference: &[usize],
    cfg: &CvaeConfig,
) -> Result<(ConfidenceReformer, Vec<f64>)> {
    let confs: Vec<ConfidenceVector> = predict_confidence_batch(model, &ds.features(reference))?;
    train_reformer_on(&confs, cfg)
}
