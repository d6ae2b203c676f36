//! Data inference attacks against a black-box confidence oracle.
//!
//! Every attack sees the target only through [`QueryOracle`]: a batch of
//! inputs in, one confidence vector per input out. Auxiliary knowledge
//! (known members, known non-members, reference rows, the defense recipe)
//! comes in through [`AttackContext`] and the attack's own arguments.

mod blindmi;
mod inference;
mod membership;
mod metrics;

pub use blindmi::{blindmi_attack, mmd2, NonmemberTransform, BLINDMI_PROBES};
pub use inference::{
    attribute_attack, inversion_attack, log_features, AttributeResult, InversionResult,
};
pub use membership::{
    adaptive_attack, gap_attack, mlleaks_attack, nsh_attack, transfer_attack, DefenseRecipe,
    MlleaksFeatures,
};
pub use metrics::{auc, balanced_accuracy, best_threshold};

use serde::{Deserialize, Serialize};

use crate::confidence::ConfidenceVector;
use crate::data::{Dataset, Splits};
use crate::error::{Error, Result};
use crate::nncore::{stack, Activation, FitConfig, Matrix, Mlp, OptimizerConfig};
use crate::purifier::{Arm, PurifierBundle};
use crate::target::{predict_confidence_batch, ClassifierConfig};

/// Black-box access to a classifier: confidence vectors only.
pub trait QueryOracle: Sync {
    fn classes(&self) -> usize;
    fn query(&self, x: &Matrix<f32>) -> Result<Vec<ConfidenceVector>>;
}

/// The target model, optionally behind a purifier.
pub struct TargetOracle<'a> {
    model: &'a Mlp<f32>,
    bundle: Option<PurifierBundle>,
}

impl<'a> TargetOracle<'a> {
    pub fn new(model: &'a Mlp<f32>, bundle: Option<&PurifierBundle>, arm: Arm) -> Self {
        let bundle = match arm {
            Arm::None => None,
            _ => bundle.map(|b| b.with_arm(arm)),
        };
        Self { model, bundle }
    }
}

impl QueryOracle for TargetOracle<'_> {
    fn classes(&self) -> usize {
        self.model.output_dim()
    }

    fn query(&self, x: &Matrix<f32>) -> Result<Vec<ConfidenceVector>> {
        match &self.bundle {
            Some(b) => b.purify_batch(self.model, x),
            None => predict_confidence_batch(self.model, x),
        }
    }
}

/// Settings shared by the attack classifiers: one hidden layer of 128 units,
/// Adam at 1e-3, 50 epochs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackModelConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
}

impl Default for AttackModelConfig {
    fn default() -> Self {
        Self {
            hidden: 128,
            epochs: 50,
            batch_size: 32,
            lr: 1e-3,
        }
    }
}

impl AttackModelConfig {
    pub fn build(
        &self,
        input: usize,
        output: usize,
        head: Activation,
        seed: u64,
    ) -> Result<Mlp<f32>> {
        Mlp::new(
            stack(&[input, self.hidden, output], Activation::Relu, head, false),
            seed,
        )
    }

    pub fn fit_config(&self, seed: u64) -> FitConfig {
        FitConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            optimizer: OptimizerConfig::adam(self.lr),
            schedule: Default::default(),
            weight_decay: 0.0,
            seed,
        }
    }
}

/// What the attacker holds besides query access.
#[derive(Clone, Copy)]
pub struct AttackContext<'a> {
    pub oracle: &'a dyn QueryOracle,
    /// Source of features, ground-truth labels and sensitive attributes for
    /// the rows named below. Never the target's parameters.
    pub ds: &'a Dataset,
    /// Known members (a subset of the target's training data).
    pub aux_members: &'a [usize],
    /// Known non-members.
    pub aux_nonmembers: &'a [usize],
    /// Held-out rows the attack is scored on.
    pub eval_members: &'a [usize],
    pub eval_nonmembers: &'a [usize],
    /// Architecture and training recipe for shadow models.
    pub shadow: &'a ClassifierConfig,
    pub attack_model: &'a AttackModelConfig,
    pub arm: Arm,
    pub seed: u64,
}

impl<'a> AttackContext<'a> {
    pub fn from_splits(
        oracle: &'a dyn QueryOracle,
        ds: &'a Dataset,
        splits: &'a Splits,
        shadow: &'a ClassifierConfig,
        attack_model: &'a AttackModelConfig,
        arm: Arm,
        seed: u64,
    ) -> Self {
        Self {
            oracle,
            ds,
            aux_members: &splits.attacker_members,
            aux_nonmembers: &splits.attacker_nonmembers,
            eval_members: splits.eval_members(),
            eval_nonmembers: splits.eval_nonmembers(),
            shadow,
            attack_model,
            arm,
            seed,
        }
    }

    /// Equal-sized member and non-member evaluation rows.
    pub fn balanced_eval(&self) -> Result<(&'a [usize], &'a [usize])> {
        let n = self.eval_members.len().min(self.eval_nonmembers.len());
        if n == 0 {
            return Err(Error::InsufficientData(
                "attack evaluation needs members and non-members".into(),
            ));
        }
        Ok((&self.eval_members[..n], &self.eval_nonmembers[..n]))
    }

    /// Attacker's auxiliary rows with their membership bits.
    pub fn aux(&self) -> Result<(Vec<usize>, Vec<bool>)> {
        if self.aux_members.is_empty() || self.aux_nonmembers.is_empty() {
            return Err(Error::Degenerate(
                "auxiliary set needs both members and non-members".into(),
            ));
        }
        let rows: Vec<usize> = self
            .aux_members
            .iter()
            .chain(self.aux_nonmembers)
            .copied()
            .collect();
        let bits = (0..rows.len())
            .map(|i| i < self.aux_members.len())
            .collect();
        Ok((rows, bits))
    }

    pub fn query_rows(&self, rows: &[usize]) -> Result<Vec<ConfidenceVector>> {
        if rows.is_empty() {
            return Ok(Vec::new());
        }
        let out = self.oracle.query(&self.ds.features(rows))?;
        if out.len() != rows.len() || out.iter().any(|c| c.len() != self.oracle.classes()) {
            return Err(Error::Dimension(
                "oracle answered with the wrong shape".into(),
            ));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    Nsh,
    Mlleaks,
    Adaptive,
    Blindmi,
    Gap,
    Transfer,
    Boundary,
    Inversion,
    Attribute,
}

impl AttackKind {
    pub const MEMBERSHIP: [AttackKind; 6] = [
        AttackKind::Nsh,
        AttackKind::Mlleaks,
        AttackKind::Adaptive,
        AttackKind::Blindmi,
        AttackKind::Gap,
        AttackKind::Transfer,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AttackKind::Nsh => "nsh",
            AttackKind::Mlleaks => "mlleaks",
            AttackKind::Adaptive => "adaptive",
            AttackKind::Blindmi => "blindmi",
            AttackKind::Gap => "gap",
            AttackKind::Transfer => "transfer",
            AttackKind::Boundary => "boundary",
            AttackKind::Inversion => "inversion",
            AttackKind::Attribute => "attribute",
        }
    }

    /// Attacks whose headline number is AUC rather than accuracy.
    pub fn reports_auc(self) -> bool {
        self == AttackKind::Transfer
    }
}

impl std::str::FromStr for AttackKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        [
            AttackKind::Nsh,
            AttackKind::Mlleaks,
            AttackKind::Adaptive,
            AttackKind::Blindmi,
            AttackKind::Gap,
            AttackKind::Transfer,
            AttackKind::Boundary,
            AttackKind::Inversion,
            AttackKind::Attribute,
        ]
        .into_iter()
        .find(|k| k.name() == s)
        .ok_or_else(|| Error::Config(format!("unknown attack {s:?}")))
    }
}

/// Scores on a balanced held-out set. Members come first in `scores`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MembershipAttackResult {
    pub attack: AttackKind,
    pub arm: Arm,
    pub seed: u64,
    pub scores: Vec<f64>,
    pub is_member: Vec<bool>,
    /// Member iff `score >= threshold`.
    pub threshold: f64,
    /// Mean of true-positive and true-negative rates.
    pub accuracy: f64,
    pub auc: f64,
    pub wall_clock: f64,
}

impl MembershipAttackResult {
    pub fn new(
        attack: AttackKind,
        ctx: &AttackContext<'_>,
        member: Vec<f64>,
        nonmember: Vec<f64>,
        threshold: f64,
    ) -> Self {
        let is_member: Vec<bool> = member
            .iter()
            .map(|_| true)
            .chain(nonmember.iter().map(|_| false))
            .collect();
        let scores: Vec<f64> = member.into_iter().chain(nonmember).collect();
        Self {
            attack,
            arm: ctx.arm,
            seed: ctx.seed,
            accuracy: balanced_accuracy(&scores, &is_member, threshold),
            auc: auc(&scores, &is_member),
            scores,
            is_member,
            threshold,
            wall_clock: 0.0,
        }
    }

    /// The headline number: AUC for the transfer attack, accuracy otherwise.
    pub fn headline(&self) -> f64 {
        if self.attack.reports_auc() {
            self.auc
        } else {
            self.accuracy
        }
    }

    pub fn record(&self) -> AttackRecord {
        AttackRecord {
            attack: self.attack.name().into(),
            target_arm: self.arm,
            accuracy: Some(self.accuracy),
            auc: Some(self.auc),
            threshold: Some(self.threshold),
            seed: self.seed,
            wall_clock: self.wall_clock,
            note: None,
        }
    }
}

/// One line of attack output on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackRecord {
    pub attack: String,
    pub target_arm: Arm,
    pub accuracy: Option<f64>,
    pub auc: Option<f64>,
    pub threshold: Option<f64>,
    pub seed: u64,
    pub wall_clock: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// The decision-boundary attack needs thousands of queries per sample and is
/// not part of this suite; its slot in reports says so.
pub fn boundary_attack(arm: Arm, seed: u64) -> AttackRecord {
    AttackRecord {
        attack: AttackKind::Boundary.name().into(),
        target_arm: arm,
        accuracy: None,
        auc: None,
        threshold: None,
        seed,
        wall_clock: 0.0,
        note: Some("not implemented".into()),
    }
}

/// Runs one membership attack, timing it.
pub fn run_membership(
    kind: AttackKind,
    ctx: &AttackContext<'_>,
    recipe: Option<&DefenseRecipe<'_>>,
) -> Result<MembershipAttackResult> {
    let start = std::time::Instant::now();
    let mut r = match kind {
        AttackKind::Nsh => nsh_attack(ctx)?,
        AttackKind::Mlleaks => mlleaks_attack(ctx, MlleaksFeatures::Top3)?,
        AttackKind::Adaptive => {
            let recipe = recipe
                .ok_or_else(|| Error::Config("adaptive attack needs the defense recipe".into()))?;
            adaptive_attack(ctx, recipe)?
        }
        AttackKind::Blindmi => blindmi_attack(ctx, &NonmemberTransform::default())?,
        AttackKind::Gap => gap_attack(ctx)?,
        AttackKind::Transfer => transfer_attack(ctx)?,
        other => {
            return Err(Error::Config(format!(
                "{} is not a membership attack",
                other.name()
            )))
        }
    };
    r.wall_clock = start.elapsed().as_secs_f64();
    Ok(r)
}

fn confidences_matrix<R: AsRef<[f64]>>(rows: &[R]) -> Result<Matrix<f32>> {
    Matrix::from_f64_rows(rows)
}

/// Derives an independent stream seed for one stage of an attack.
fn sub_seed(seed: u64, stage: u64) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15)
        .wrapping_add(stage.wrapping_mul(0xbf58_476d_1ce4_e5b9))
        ^ stage
}
