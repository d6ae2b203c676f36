use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{DataConfig, ExperimentConfig};
use crate::attacks::{
    attribute_attack, boundary_attack, inversion_attack, run_membership, AttackContext, AttackKind,
    AttackRecord, AttributeResult, DefenseRecipe, InversionResult, MembershipAttackResult,
    TargetOracle,
};
use crate::confidence::ConfidenceVector;
use crate::data::{load_csv, split, synthesize, Dataset, SplitPlan, Splits};
use crate::error::{Error, Result};
use crate::eval::{attack_column, dispersion_ratio, GapStats, Measurement};
use crate::nncore::Mlp;
use crate::purifier::{train_purifier, Arm, PurifierBundle, PurifierConfig, PurifierReport};
use crate::target::{predict_confidence_batch, train_target, ClassifierConfig, TrainReport};

pub const ACC_TRAIN: &str = "acc_train";
pub const ACC_TEST: &str = "acc_test";
pub const INVERSION_ERROR: &str = "inversion_error";
pub const ATTRIBUTE_ACCURACY: &str = "attribute_accuracy";
pub const CONF_GAP_MAX: &str = "conf_gap_max";
pub const CONF_GAP_AVG: &str = "conf_gap_avg";
pub const UNC_GAP_MAX: &str = "unc_gap_max";
pub const UNC_GAP_AVG: &str = "unc_gap_avg";
pub const DISPERSION_RATIO: &str = "dispersion_ratio";

/// Seed of one pipeline stage, derived from the run seed and the stage name.
pub fn derive_seed(run: u64, stage: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in stage.as_bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    // splitmix64 finalizer
    let mut z = h ^ run.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// The rows, built from the config: synthesized in memory or read from CSV.
pub fn load_dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    match &cfg.data {
        DataConfig::Synth(spec) => synthesize(spec),
        DataConfig::Csv { path, schema } => load_csv(path, schema),
    }
}

pub fn split_plan(cfg: &ExperimentConfig, seed: u64) -> SplitPlan {
    SplitPlan {
        seed: derive_seed(seed, "split"),
        ..cfg.split
    }
}

pub fn target_config(cfg: &ExperimentConfig, seed: u64) -> ClassifierConfig {
    let mut c = cfg.target.clone();
    c.fit.seed = derive_seed(seed, "target");
    c
}

pub fn purifier_config(cfg: &ExperimentConfig, classes: usize, seed: u64) -> PurifierConfig {
    let mut c = cfg.purifier.clone();
    c.cvae.classes = classes;
    c.cvae.fit.seed = derive_seed(seed, "reformer");
    c.swap_seed = derive_seed(seed, "swap");
    c.noise_salt = derive_seed(seed, "noise");
    c
}

/// The defense recipe as an adaptive attacker rebuilds it: same settings,
/// the attacker's own seeds.
pub fn attacker_recipe_config(cfg: &ExperimentConfig, classes: usize, seed: u64) -> PurifierConfig {
    purifier_config(cfg, classes, derive_seed(seed, "adaptive"))
}

/// Everything trained for one seed.
#[derive(Debug, Clone)]
pub struct Trial {
    pub seed: u64,
    pub splits: Splits,
    pub target: Mlp<f32>,
    pub target_report: TrainReport,
    pub purifier: Option<(PurifierBundle, PurifierReport)>,
}

impl Trial {
    pub fn bundle(&self) -> Option<&PurifierBundle> {
        self.purifier.as_ref().map(|(b, _)| b)
    }
}

/// Splits the rows and trains the target, then the purifier when any arm
/// other than `none` is configured.
pub fn train_trial(cfg: &ExperimentConfig, ds: &Dataset, seed: u64) -> Result<Trial> {
    let splits = split(ds, &split_plan(cfg, seed))?;
    let (target, target_report) =
        train_target(&target_config(cfg, seed), ds, &splits.d1, &splits.d3)?;
    let purifier = if cfg.arms.iter().any(|&a| a != Arm::None) {
        Some(train_purifier(
            &target,
            ds,
            &splits,
            &purifier_config(cfg, ds.k, seed),
        )?)
    } else {
        None
    };
    Ok(Trial {
        seed,
        splits,
        target,
        target_report,
        purifier,
    })
}

/// What an attack produced, as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AttackOutcome {
    Membership(MembershipAttackResult),
    Skipped(AttackRecord),
    Inversion(InversionResult),
    Attribute(AttributeResult),
}

impl AttackOutcome {
    pub fn measurements(&self, seed: u64, arm: Arm) -> Vec<Measurement> {
        match self {
            AttackOutcome::Membership(r) => vec![Measurement::new(
                seed,
                arm,
                attack_column(r.attack),
                r.headline(),
            )],
            AttackOutcome::Skipped(r) => Measurement::from_record(r).into_iter().collect(),
            AttackOutcome::Inversion(r) => {
                vec![Measurement::new(seed, arm, INVERSION_ERROR, r.error)]
            }
            AttackOutcome::Attribute(r) => {
                vec![Measurement::new(seed, arm, ATTRIBUTE_ACCURACY, r.accuracy)]
            }
        }
    }

    pub fn wall_clock(&self) -> f64 {
        match self {
            AttackOutcome::Membership(r) => r.wall_clock,
            AttackOutcome::Skipped(r) => r.wall_clock,
            AttackOutcome::Inversion(r) => r.wall_clock,
            AttackOutcome::Attribute(r) => r.wall_clock,
        }
    }
}

/// Inversion training and test rows: an 80/20 split of all three partitions.
pub fn inversion_rows(splits: &Splits, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rows: Vec<usize> = splits
        .d1
        .iter()
        .chain(&splits.d2)
        .chain(&splits.d3)
        .copied()
        .collect();
    rows.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(
        seed,
        "inversion",
    )));
    let test = rows.split_off(rows.len() * 4 / 5);
    (rows, test)
}

/// Runs one attack against one arm. The target and bundle are reached only
/// through the oracle; the adaptive attacker additionally gets the recipe.
#[allow(clippy::too_many_arguments)]
pub fn run_attack(
    cfg: &ExperimentConfig,
    ds: &Dataset,
    splits: &Splits,
    target: &Mlp<f32>,
    bundle: Option<&PurifierBundle>,
    arm: Arm,
    kind: AttackKind,
    seed: u64,
) -> Result<AttackOutcome> {
    if arm != Arm::None && bundle.is_none() {
        return Err(Error::Config(format!(
            "arm {} needs a trained purifier",
            arm.name()
        )));
    }
    if kind == AttackKind::Boundary {
        return Ok(AttackOutcome::Skipped(boundary_attack(arm, seed)));
    }
    let oracle = TargetOracle::new(target, bundle, arm);
    let shadow = target_config(cfg, seed);
    let ctx = AttackContext::from_splits(
        &oracle,
        ds,
        splits,
        &shadow,
        &cfg.attack_model,
        arm,
        derive_seed(seed, kind.name()),
    );
    Ok(match kind {
        AttackKind::Inversion => {
            let (train, test) = inversion_rows(splits, seed);
            AttackOutcome::Inversion(inversion_attack(&ctx, &train, &test)?)
        }
        AttackKind::Attribute => AttackOutcome::Attribute(attribute_attack(&ctx)?),
        _ => {
            let recipe_cfg = attacker_recipe_config(cfg, ds.k, seed);
            let recipe = DefenseRecipe {
                config: &recipe_cfg,
                reference: &splits.d2,
            };
            let mut r = run_membership(kind, &ctx, Some(&recipe))?;
            r.seed = seed;
            AttackOutcome::Membership(r)
        }
    })
}

/// Per-arm utility and indistinguishability numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmDiagnostics {
    pub acc_train: f64,
    pub acc_test: f64,
    pub gap_stats: GapStats,
    /// Latent dispersion of training members with noise over without;
    /// `None` when the arm has no reformer.
    pub dispersion_ratio: Option<f64>,
}

impl ArmDiagnostics {
    pub fn measurements(&self, seed: u64, arm: Arm) -> Vec<Measurement> {
        let mut m = vec![
            Measurement::new(seed, arm, ACC_TRAIN, self.acc_train),
            Measurement::new(seed, arm, ACC_TEST, self.acc_test),
            Measurement::new(seed, arm, CONF_GAP_MAX, self.gap_stats.confidence.max),
            Measurement::new(seed, arm, CONF_GAP_AVG, self.gap_stats.confidence.avg),
            Measurement::new(seed, arm, UNC_GAP_MAX, self.gap_stats.uncertainty.max),
            Measurement::new(seed, arm, UNC_GAP_AVG, self.gap_stats.uncertainty.avg),
        ];
        if let Some(d) = self.dispersion_ratio {
            m.push(Measurement::new(seed, arm, DISPERSION_RATIO, d));
        }
        m
    }
}

/// The arm's answers on `rows`.
pub fn arm_outputs(
    ds: &Dataset,
    target: &Mlp<f32>,
    bundle: Option<&PurifierBundle>,
    arm: Arm,
    rows: &[usize],
) -> Result<Vec<ConfidenceVector>> {
    let x = ds.features(rows);
    match (arm, bundle) {
        (Arm::None, _) => predict_confidence_batch(target, &x),
        (_, Some(b)) => b.with_arm(arm).purify_batch(target, &x),
        (_, None) => Err(Error::Config(format!(
            "arm {} needs a trained purifier",
            arm.name()
        ))),
    }
}

fn accuracy_of(confs: &[ConfidenceVector], labels: &[usize]) -> f64 {
    let hits = confs
        .iter()
        .zip(labels)
        .filter(|(c, &y)| c.argmax() == y)
        .count();
    hits as f64 / labels.len().max(1) as f64
}

/// Training members (all of `d1`) against test non-members (all of `d3`).
pub fn arm_diagnostics(
    ds: &Dataset,
    splits: &Splits,
    target: &Mlp<f32>,
    bundle: Option<&PurifierBundle>,
    arm: Arm,
    bins: usize,
) -> Result<ArmDiagnostics> {
    let (ym, yn) = (ds.labels(&splits.d1), ds.labels(&splits.d3));
    let m = arm_outputs(ds, target, bundle, arm, &splits.d1)?;
    let n = arm_outputs(ds, target, bundle, arm, &splits.d3)?;
    let dispersion = match (arm.flags().reformer_enabled, bundle) {
        (true, Some(b)) => {
            let raw = predict_confidence_batch(target, &ds.features(&splits.d1))?;
            Some(dispersion_ratio(&b.reformer, &raw, &ym, b.noise_salt)?)
        }
        _ => None,
    };
    Ok(ArmDiagnostics {
        acc_train: accuracy_of(&m, &ym),
        acc_test: accuracy_of(&n, &yn),
        gap_stats: GapStats::compute(&m, &ym, &n, &yn, bins)?,
        dispersion_ratio: dispersion,
    })
}

/// Report columns for the configured attacks, in table order.
pub fn report_columns(cfg: &ExperimentConfig) -> Vec<String> {
    let mut cols = vec![ACC_TRAIN.to_string(), ACC_TEST.to_string()];
    for &k in &cfg.attacks {
        cols.push(match k {
            AttackKind::Inversion => INVERSION_ERROR.to_string(),
            AttackKind::Attribute => ATTRIBUTE_ACCURACY.to_string(),
            _ => attack_column(k),
        });
    }
    cols.extend(
        [
            CONF_GAP_MAX,
            CONF_GAP_AVG,
            UNC_GAP_MAX,
            UNC_GAP_AVG,
            DISPERSION_RATIO,
        ]
        .map(String::from),
    );
    cols
}
