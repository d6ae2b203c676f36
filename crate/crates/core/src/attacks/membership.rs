use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::metrics::best_threshold;
use super::{confidences_matrix, sub_seed, AttackContext, AttackKind, MembershipAttackResult};
use crate::confidence::ConfidenceVector;
use crate::error::Result;
use crate::nncore::{fit, predict_batched, Activation, Matrix, Mlp, Targets};
use crate::purifier::{train_purifier_on, Arm, PurifierConfig};
use crate::target::{predict_confidence_batch, train_on, ClassifierConfig};

/// Score threshold applied to the sigmoid output of attack classifiers.
pub const SCORE_THRESHOLD: f64 = 0.5;

fn train_membership_model(
    ctx: &AttackContext<'_>,
    x: &Matrix<f32>,
    member: &[bool],
    stage: u64,
) -> Result<Mlp<f32>> {
    let seed = sub_seed(ctx.seed, stage);
    let mut model = ctx
        .attack_model
        .build(x.cols(), 1, Activation::Sigmoid, seed)?;
    let targets: Vec<f32> = member.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect();
    fit(
        &mut model,
        x,
        Targets::Binary(&targets),
        &ctx.attack_model.fit_config(seed),
    )?;
    Ok(model)
}

fn scores(model: &Mlp<f32>, x: &Matrix<f32>) -> Result<Vec<f64>> {
    Ok(predict_batched(model, x)?
        .data()
        .iter()
        .map(|&v| v as f64)
        .collect())
}

fn nsh_features(
    ctx: &AttackContext<'_>,
    confs: &[ConfidenceVector],
    rows: &[usize],
) -> Result<Matrix<f32>> {
    let k = ctx.oracle.classes();
    let feats: Vec<Vec<f64>> = confs
        .iter()
        .zip(ctx.ds.labels(rows))
        .map(|(c, y)| {
            let mut f = c.probs().to_vec();
            f.extend((0..k).map(|j| if j == y { 1.0 } else { 0.0 }));
            f
        })
        .collect();
    confidences_matrix(&feats)
}

/// Membership classifier on the confidence vector and the one-hot ground
/// truth, trained directly on the attacker's known members and non-members.
pub fn nsh_attack(ctx: &AttackContext<'_>) -> Result<MembershipAttackResult> {
    let (aux, bits) = ctx.aux()?;
    let x = nsh_features(ctx, &ctx.query_rows(&aux)?, &aux)?;
    let model = train_membership_model(ctx, &x, &bits, 1)?;
    let (m, n) = ctx.balanced_eval()?;
    let sm = scores(&model, &nsh_features(ctx, &ctx.query_rows(m)?, m)?)?;
    let sn = scores(&model, &nsh_features(ctx, &ctx.query_rows(n)?, n)?)?;
    Ok(MembershipAttackResult::new(
        AttackKind::Nsh,
        ctx,
        sm,
        sn,
        SCORE_THRESHOLD,
    ))
}

/// Inputs of the shadow-based membership classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MlleaksFeatures {
    /// The three largest confidences, descending.
    #[default]
    Top3,
    /// The whole confidence vector.
    Full,
}

impl MlleaksFeatures {
    fn matrix(self, confs: &[ConfidenceVector]) -> Result<Matrix<f32>> {
        let rows: Vec<Vec<f64>> = confs
            .iter()
            .map(|c| match self {
                MlleaksFeatures::Top3 => c.top_sorted(3),
                MlleaksFeatures::Full => c.probs().to_vec(),
            })
            .collect();
        confidences_matrix(&rows)
    }
}

/// Splits the auxiliary rows in half: the first half trains the shadow.
fn shadow_halves(ctx: &AttackContext<'_>) -> Result<(Vec<usize>, Vec<usize>)> {
    let (mut aux, _) = ctx.aux()?;
    aux.shuffle(&mut ChaCha8Rng::seed_from_u64(sub_seed(ctx.seed, 2)));
    let out = aux.split_off(aux.len() / 2);
    Ok((aux, out))
}

fn train_shadow(
    ctx: &AttackContext<'_>,
    rows: &[usize],
    labels: &[usize],
    stage: u64,
) -> Result<Mlp<f32>> {
    let cfg = ClassifierConfig {
        fit: crate::nncore::FitConfig {
            seed: sub_seed(ctx.seed, stage),
            ..ctx.shadow.fit.clone()
        },
        ..ctx.shadow.clone()
    };
    Ok(train_on(&cfg, &ctx.ds.features(rows), labels, ctx.ds.d, ctx.ds.k)?.0)
}

fn shadow_membership(
    ctx: &AttackContext<'_>,
    kind: AttackKind,
    features: MlleaksFeatures,
    shadow_outputs: impl Fn(&Mlp<f32>, &[usize], &[usize], &[usize]) -> Result<Vec<ConfidenceVector>>,
) -> Result<MembershipAttackResult> {
    let (inside, outside) = shadow_halves(ctx)?;
    let shadow = train_shadow(ctx, &inside, &ctx.ds.labels(&inside), 3)?;
    let rows: Vec<usize> = inside.iter().chain(&outside).copied().collect();
    let bits: Vec<bool> = (0..rows.len()).map(|i| i < inside.len()).collect();
    let x = features.matrix(&shadow_outputs(&shadow, &inside, &outside, &rows)?)?;
    let model = train_membership_model(ctx, &x, &bits, 4)?;
    let (m, n) = ctx.balanced_eval()?;
    let sm = scores(&model, &features.matrix(&ctx.query_rows(m)?)?)?;
    let sn = scores(&model, &features.matrix(&ctx.query_rows(n)?)?)?;
    Ok(MembershipAttackResult::new(
        kind,
        ctx,
        sm,
        sn,
        SCORE_THRESHOLD,
    ))
}

/// Shadow model on half the auxiliary rows; the membership classifier learns
/// shadow-membership from the shadow's confidences and is then applied to
/// the target's answers. Uses ground truth but not the aux membership bits.
pub fn mlleaks_attack(
    ctx: &AttackContext<'_>,
    features: MlleaksFeatures,
) -> Result<MembershipAttackResult> {
    shadow_membership(ctx, AttackKind::Mlleaks, features, |shadow, _, _, rows| {
        predict_confidence_batch(shadow, &ctx.ds.features(rows))
    })
}

/// What an adaptive attacker knows about the defense.
#[derive(Debug, Clone, Copy)]
pub struct DefenseRecipe<'a> {
    pub config: &'a PurifierConfig,
    /// The defender's reference rows.
    pub reference: &'a [usize],
}

/// The shadow-model attack with the attacker's own copy of the defense,
/// trained by the same recipe on the shadow and placed behind it.
pub fn adaptive_attack(
    ctx: &AttackContext<'_>,
    recipe: &DefenseRecipe<'_>,
) -> Result<MembershipAttackResult> {
    shadow_membership(
        ctx,
        AttackKind::Adaptive,
        MlleaksFeatures::Top3,
        |shadow, inside, outside, rows| {
            let x = ctx.ds.features(rows);
            if ctx.arm == Arm::None {
                return predict_confidence_batch(shadow, &x);
            }
            let (bundle, _) = train_purifier_on(
                shadow,
                ctx.ds,
                inside,
                recipe.reference,
                outside,
                recipe.config,
            )?;
            bundle.with_arm(ctx.arm).purify_batch(shadow, &x)
        },
    )
}

/// Member iff the returned label equals the ground truth.
pub fn gap_attack(ctx: &AttackContext<'_>) -> Result<MembershipAttackResult> {
    let (m, n) = ctx.balanced_eval()?;
    let correct = |rows: &[usize]| -> Result<Vec<f64>> {
        Ok(ctx
            .query_rows(rows)?
            .iter()
            .zip(ctx.ds.labels(rows))
            .map(|(c, y)| if c.argmax() == y { 1.0 } else { 0.0 })
            .collect())
    };
    Ok(MembershipAttackResult::new(
        AttackKind::Gap,
        ctx,
        correct(m)?,
        correct(n)?,
        0.5,
    ))
}

/// Label-only: the auxiliary rows are relabeled with the oracle's answers, a
/// shadow is trained on them, and a row's score is the shadow's confidence in
/// the label the oracle gives it. The threshold is the one that best
/// separates the attacker's known members and non-members.
pub fn transfer_attack(ctx: &AttackContext<'_>) -> Result<MembershipAttackResult> {
    let (aux, bits) = ctx.aux()?;
    let labels = |rows: &[usize]| -> Result<Vec<usize>> {
        Ok(ctx
            .query_rows(rows)?
            .iter()
            .map(ConfidenceVector::argmax)
            .collect())
    };
    let aux_labels = labels(&aux)?;
    let shadow = train_shadow(ctx, &aux, &aux_labels, 5)?;
    let score = |rows: &[usize], given: &[usize]| -> Result<Vec<f64>> {
        Ok(predict_confidence_batch(&shadow, &ctx.ds.features(rows))?
            .iter()
            .zip(given)
            .map(|(c, &l)| c.probs()[l])
            .collect())
    };
    let threshold = best_threshold(&score(&aux, &aux_labels)?, &bits);
    let (m, n) = ctx.balanced_eval()?;
    let sm = score(m, &labels(m)?)?;
    let sn = score(n, &labels(n)?)?;
    Ok(MembershipAttackResult::new(
        AttackKind::Transfer,
        ctx,
        sm,
        sn,
        threshold,
    ))
}
