use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{sub_seed, AttackContext, AttackKind, MembershipAttackResult};
use crate::confidence::ConfidenceVector;
use crate::error::{Error, Result};
use crate::nncore::Matrix;

/// Size of the generated non-member probe set per batch.
pub const BLINDMI_PROBES: usize = 20;
/// Candidates compared against one probe set.
const BATCH: usize = 100;

/// Turns real rows into probable non-members before querying.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NonmemberTransform {
    /// Each feature is replaced by its population mean with probability `prob`.
    MeanReplace { prob: f64 },
}

impl Default for NonmemberTransform {
    fn default() -> Self {
        NonmemberTransform::MeanReplace { prob: 0.5 }
    }
}

impl NonmemberTransform {
    fn apply(&self, x: &[f64], mean: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
        match *self {
            NonmemberTransform::MeanReplace { prob } => x
                .iter()
                .zip(mean)
                .map(|(&v, &m)| if rng.random::<f64>() < prob { m } else { v })
                .collect(),
        }
    }
}

/// Top-3 confidences and the confidence in the ground-truth class.
fn feature(c: &ConfidenceVector, y: usize) -> Vec<f64> {
    let mut f = c.top_sorted(3);
    f.push(c.probs()[y]);
    f
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn median_distance(points: &[Vec<f64>]) -> Result<f64> {
    let mut d = Vec::with_capacity(points.len() * points.len() / 2);
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            d.push(sq_dist(&points[i], &points[j]).sqrt());
        }
    }
    d.sort_by(f64::total_cmp);
    let med = d.get(d.len() / 2).copied().unwrap_or(0.0);
    if med > 0.0 {
        return Ok(med);
    }
    // more than half the pairs coincide: fall back to the mean positive distance
    let pos: Vec<f64> = d.into_iter().filter(|&v| v > 0.0).collect();
    if pos.is_empty() {
        return Err(Error::Degenerate(
            "all attack features coincide; kernel bandwidth is zero".into(),
        ));
    }
    Ok(pos.iter().sum::<f64>() / pos.len() as f64)
}

fn kernel(a: &[f64], b: &[f64], h: f64) -> f64 {
    (-sq_dist(a, b) / (2.0 * h * h)).exp()
}

/// Biased squared maximum mean discrepancy with a Gaussian kernel.
pub fn mmd2(a: &[Vec<f64>], b: &[Vec<f64>], bandwidth: f64) -> f64 {
    let mean = |x: &[Vec<f64>], y: &[Vec<f64>]| {
        let mut s = 0.0;
        for p in x {
            for q in y {
                s += kernel(p, q, bandwidth);
            }
        }
        s / (x.len() * y.len()) as f64
    };
    mean(a, a) + mean(b, b) - 2.0 * mean(a, b)
}

/// For each candidate, the drop in MMD between the candidate set and the
/// probe set when the candidate moves from the former to the latter.
/// Positive means the sets got closer, which marks a member.
fn differential_scores(candidates: &[Vec<f64>], probes: &[Vec<f64>]) -> Result<Vec<f64>> {
    let all: Vec<Vec<f64>> = candidates.iter().chain(probes).cloned().collect();
    let h = median_distance(&all)?;
    let (nt, nn) = (candidates.len() as f64, probes.len() as f64);
    let row_t: Vec<f64> = candidates
        .iter()
        .map(|x| candidates.iter().map(|y| kernel(x, y, h)).sum())
        .collect();
    let row_n: Vec<f64> = candidates
        .iter()
        .map(|x| probes.iter().map(|y| kernel(x, y, h)).sum())
        .collect();
    let s_tt: f64 = row_t.iter().sum();
    let s_tn: f64 = row_n.iter().sum();
    let s_nn: f64 = probes
        .iter()
        .map(|x| probes.iter().map(|y| kernel(x, y, h)).sum::<f64>())
        .sum();
    let before = s_tt / (nt * nt) + s_nn / (nn * nn) - 2.0 * s_tn / (nt * nn);
    Ok((0..candidates.len())
        .map(|i| {
            if nt <= 1.0 {
                return 0.0;
            }
            let kxx = 1.0;
            let tt = s_tt - 2.0 * row_t[i] + kxx;
            let nn2 = s_nn + 2.0 * row_n[i] + kxx;
            let tn = s_tn - row_n[i] + (row_t[i] - kxx);
            let after = tt / ((nt - 1.0) * (nt - 1.0)) + nn2 / ((nn + 1.0) * (nn + 1.0))
                - 2.0 * tn / ((nt - 1.0) * (nn + 1.0));
            before - after
        })
        .collect())
}

/// Differential comparison against generated non-members: candidates are
/// scored in batches against a probe set made by transforming rows of the
/// batch, and a candidate is a member iff moving it to the probe set does
/// not push the two sets apart.
pub fn blindmi_attack(
    ctx: &AttackContext<'_>,
    transform: &NonmemberTransform,
) -> Result<MembershipAttackResult> {
    let (m, n) = ctx.balanced_eval()?;
    let (aux, _) = ctx.aux()?;
    let d = ctx.ds.d;
    let mut mean = vec![0.0; d];
    for &r in &aux {
        for (acc, v) in mean.iter_mut().zip(&ctx.ds.point(r).features) {
            *acc += v;
        }
    }
    mean.iter_mut().for_each(|v| *v /= aux.len() as f64);

    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(ctx.seed, 6));
    let mut order: Vec<usize> = (0..m.len() + n.len()).collect();
    order.shuffle(&mut rng);
    let row_of = |i: usize| if i < m.len() { m[i] } else { n[i - m.len()] };
    let mut score = vec![0.0; order.len()];
    for batch in order.chunks(BATCH) {
        let rows: Vec<usize> = batch.iter().map(|&i| row_of(i)).collect();
        let cand: Vec<Vec<f64>> = ctx
            .query_rows(&rows)?
            .iter()
            .zip(ctx.ds.labels(&rows))
            .map(|(c, y)| feature(c, y))
            .collect();
        let sources: Vec<usize> = (0..BLINDMI_PROBES)
            .map(|_| rows[rng.random_range(0..rows.len())])
            .collect();
        let probe_x: Vec<Vec<f64>> = sources
            .iter()
            .map(|&r| transform.apply(&ctx.ds.point(r).features, &mean, &mut rng))
            .collect();
        let probe_c = ctx.oracle.query(&Matrix::from_f64_rows(&probe_x)?)?;
        let probes: Vec<Vec<f64>> = probe_c
            .iter()
            .zip(ctx.ds.labels(&sources))
            .map(|(c, y)| feature(c, y))
            .collect();
        for (&i, s) in batch.iter().zip(differential_scores(&cand, &probes)?) {
            score[i] = s;
        }
    }
    let sn = score.split_off(m.len());
    Ok(MembershipAttackResult::new(
        AttackKind::Blindmi,
        ctx,
        score,
        sn,
        0.0,
    ))
}
