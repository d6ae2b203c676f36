use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::confidence::ConfidenceVector;
use crate::data::Dataset;
use crate::error::{dim_err, Error, Result};
use crate::nncore::Mlp;
use crate::target::predict_confidence_batch;

/// Fraction of training members whose labels are swapped so that training
/// accuracy drops to test accuracy: `(acc_train - acc_test) / acc_train`,
/// clamped to `[0, 1]`.
pub fn compute_swap_rate(acc_train: f64, acc_test: f64) -> Result<f64> {
    if !(acc_train > 0.0 && acc_train <= 1.0) || !(0.0..=1.0).contains(&acc_test) {
        return Err(Error::Degenerate(format!(
            "accuracies must lie in (0, 1] and [0, 1], got {acc_train} and {acc_test}"
        )));
    }
    Ok(((acc_train - acc_test) / acc_train).clamp(0.0, 1.0))
}

/// `floor(x + 0.5)` for non-negative `x`.
pub fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor() as usize
}

/// Members whose labels are swapped, fixed once at training time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwapPlan {
    pub p_swap: f64,
    /// Dataset row indices, a subset of the training partition.
    pub members: Vec<usize>,
    pub seed: u64,
}

impl SwapPlan {
    /// Draws `round_half_up(p_swap * |train|)` rows of `train` uniformly.
    pub fn select(train: &[usize], p_swap: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p_swap) {
            return Err(Error::Config(format!("swap rate {p_swap} outside [0, 1]")));
        }
        let n = round_half_up(p_swap * train.len() as f64).min(train.len());
        let mut pool = train.to_vec();
        pool.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        pool.truncate(n);
        Ok(Self {
            p_swap,
            members: pool,
            seed,
        })
    }
}

/// Exchanges the largest and second-largest entries. Ties resolve toward the
/// lower class index, so a uniform vector swaps classes 0 and 1.
pub fn swap_label(p: &ConfidenceVector) -> Result<ConfidenceVector> {
    let (a, b) = p
        .top_two()
        .ok_or_else(|| dim_err("label swap needs at least two classes".to_string()))?;
    let mut v = p.probs().to_vec();
    v.swap(a, b);
    ConfidenceVector::new(v)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KnnParams {
    /// Neighbours inspected per query.
    pub k_nn: usize,
    /// Match radius in L2 distance; 0 means exact match.
    pub tau: f64,
}

impl Default for KnnParams {
    fn default() -> Self {
        Self { k_nn: 1, tau: 0.0 }
    }
}

pub fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Stored original confidences of the swap set with an exact nearest
/// neighbour search. Entries are kept sorted by Euclidean norm; since
/// `| |q| - |e| | <= |q - e|`, the scan walks outward from `|q|` and stops once
/// the norm gap exceeds the current k-th best distance.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionIndex {
    k: usize,
    entries: Vec<Vec<f64>>,
    /// `(norm, entry position)` sorted by norm.
    by_norm: Vec<(f64, usize)>,
    pub params: KnnParams,
}

impl PredictionIndex {
    pub fn new(k: usize, entries: Vec<Vec<f64>>, params: KnnParams) -> Result<Self> {
        if params.k_nn == 0 {
            return Err(Error::Config("k_nn must be at least 1".into()));
        }
        if !(params.tau >= 0.0 && params.tau.is_finite()) {
            return Err(Error::Config(format!(
                "match radius {} must be finite and >= 0",
                params.tau
            )));
        }
        for e in &entries {
            if e.len() != k {
                return Err(dim_err(format!(
                    "index entry of length {}, expected {k}",
                    e.len()
                )));
            }
            if e.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("index entry".into()));
            }
        }
        let mut by_norm: Vec<(f64, usize)> = entries
            .iter()
            .enumerate()
            .map(|(i, e)| (norm(e), i))
            .collect();
        by_norm.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        Ok(Self {
            k,
            entries,
            by_norm,
            params,
        })
    }

    pub fn classes(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[Vec<f64>] {
        &self.entries
    }

    /// The `n` nearest entries as `(entry position, distance)`, closest first,
    /// ties broken by position.
    pub fn nearest(&self, q: &[f64], n: usize) -> Result<Vec<(usize, f64)>> {
        if q.len() != self.k {
            return Err(dim_err(format!(
                "query of length {}, index holds {}",
                q.len(),
                self.k
            )));
        }
        let n = n.min(self.entries.len());
        if n == 0 {
            return Ok(Vec::new());
        }
        let qn = norm(q);
        let start = self.by_norm.partition_point(|&(en, _)| en < qn);
        let mut best: Vec<(usize, f64)> = Vec::with_capacity(n + 1);
        let bound = |best: &Vec<(usize, f64)>| {
            if best.len() < n {
                f64::INFINITY
            } else {
                // slack absorbs rounding in the norms
                best[n - 1].1 * (1.0 + 1e-12) + 1e-300
            }
        };
        let consider = |best: &mut Vec<(usize, f64)>, pos: usize| {
            let d = l2(q, &self.entries[pos]);
            let key = (pos, d);
            let at = best.partition_point(|&(p, bd)| bd < d || (bd == d && p < pos));
            if at < n {
                best.insert(at, key);
                best.truncate(n);
            }
        };
        let (mut lo, mut hi) = (start, start);
        loop {
            let down = lo.checked_sub(1).map(|i| (qn - self.by_norm[i].0, i));
            let up = (hi < self.by_norm.len()).then(|| (self.by_norm[hi].0 - qn, hi));
            let pick = match (down, up) {
                (Some(d), Some(u)) => {
                    if d.0 <= u.0 {
                        (d, true)
                    } else {
                        (u, false)
                    }
                }
                (Some(d), None) => (d, true),
                (None, Some(u)) => (u, false),
                (None, None) => break,
            };
            let ((gap, i), is_down) = pick;
            if gap > bound(&best) {
                break;
            }
            consider(&mut best, self.by_norm[i].1);
            if is_down {
                lo -= 1;
            } else {
                hi += 1;
            }
        }
        Ok(best)
    }

    /// True iff the closest of the `k_nn` nearest entries lies within `tau`.
    /// An empty index matches nothing.
    pub fn matches(&self, q: &[f64]) -> Result<bool> {
        Ok(self
            .nearest(q, self.params.k_nn)?
            .first()
            .is_some_and(|&(_, d)| d <= self.params.tau))
    }
}

/// Stores `F(x)` for every swap-set row, before any reforming.
pub fn build_index(
    model: &Mlp<f32>,
    ds: &Dataset,
    plan: &SwapPlan,
    params: KnnParams,
) -> Result<PredictionIndex> {
    if plan.members.is_empty() && plan.p_swap > 0.0 {
        return Err(Error::Degenerate(
            "swap set is empty at a positive swap rate".into(),
        ));
    }
    let confs = if plan.members.is_empty() {
        Vec::new()
    } else {
        predict_confidence_batch(model, &ds.features(&plan.members))?
    };
    PredictionIndex::new(
        ds.k,
        confs
            .into_iter()
            .map(ConfidenceVector::into_inner)
            .collect(),
        params,
    )
}

/// Match radius as a quantile of the distances between stored entries and
/// fresh recomputations of the same members, queried one at a time.
/// Zero whenever the target is deterministic.
pub fn calibrate_tau(
    model: &Mlp<f32>,
    ds: &Dataset,
    index: &PredictionIndex,
    plan: &SwapPlan,
    quantile: f64,
) -> Result<f64> {
    if plan.members.is_empty() {
        return Ok(0.0);
    }
    let mut d = Vec::with_capacity(plan.members.len());
    for &row in &plan.members {
        let c = crate::target::predict_confidence(model, &ds.point(row).features)?;
        d.push(index.nearest(c.probs(), 1)?[0].1);
    }
    d.sort_by(f64::total_cmp);
    let pos = ((quantile.clamp(0.0, 1.0) * (d.len() - 1) as f64).ceil()) as usize;
    Ok(d[pos])
}
