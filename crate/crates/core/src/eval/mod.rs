//! Metrics and diagnostics comparing members and non-members, and assembly
//! of the per-arm report.

mod report;

pub use report::{
    assemble_report, attack_column, Cell, EvalReport, Measurement, ReportRow, ReportSpec, ABSENT,
};

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::confidence::ConfidenceVector;
use crate::error::{Error, Result};
use crate::purifier::{ConfidenceReformer, NoiseMode};

/// Default histogram resolution on `[0, 1]`.
pub const DEFAULT_BINS: usize = 20;

/// Entropy divided by `ln k`, with `0 ln 0 = 0`. In `[0, 1]`.
pub fn uncertainty(c: &ConfidenceVector) -> Result<f64> {
    let k = c.len();
    if k < 2 {
        return Err(Error::Config(format!(
            "uncertainty needs at least 2 classes, got {k}"
        )));
    }
    let h: f64 = c
        .probs()
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.ln())
        .sum();
    Ok((h / (k as f64).ln()).clamp(0.0, 1.0))
}

/// Largest and mean absolute difference between two normalized histograms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramGap {
    pub max: f64,
    pub avg: f64,
}

fn histogram(values: &[f64], bins: usize) -> Vec<f64> {
    let mut h = vec![0.0; bins];
    for &v in values {
        let b = ((v.clamp(0.0, 1.0) * bins as f64) as usize).min(bins - 1);
        h[b] += 1.0;
    }
    let n = values.len() as f64;
    h.iter_mut().for_each(|v| *v /= n);
    h
}

/// Histograms both samples on `[0, 1]` with `bins` equal bins and compares
/// the per-bin frequencies.
pub fn gap_stats(
    member_values: &[f64],
    nonmember_values: &[f64],
    bins: usize,
) -> Result<HistogramGap> {
    if member_values.is_empty() || nonmember_values.is_empty() {
        return Err(Error::InsufficientData(
            "gap statistics need both samples".into(),
        ));
    }
    if bins == 0 {
        return Err(Error::Config("histogram needs at least one bin".into()));
    }
    let (a, b) = (
        histogram(member_values, bins),
        histogram(nonmember_values, bins),
    );
    let diffs: Vec<f64> = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).collect();
    Ok(HistogramGap {
        max: diffs.iter().copied().fold(0.0, f64::max),
        avg: diffs.iter().sum::<f64>() / bins as f64,
    })
}

/// Member/non-member histogram gaps for the confidence in the correct class
/// and for the uncertainty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapStats {
    pub bins: usize,
    pub confidence: HistogramGap,
    pub uncertainty: HistogramGap,
}

impl GapStats {
    pub fn compute(
        members: &[ConfidenceVector],
        member_labels: &[usize],
        nonmembers: &[ConfidenceVector],
        nonmember_labels: &[usize],
        bins: usize,
    ) -> Result<Self> {
        if members.len() != member_labels.len() || nonmembers.len() != nonmember_labels.len() {
            return Err(Error::Dimension("one label per confidence vector".into()));
        }
        let correct = |cs: &[ConfidenceVector], ys: &[usize]| -> Result<Vec<f64>> {
            cs.iter()
                .zip(ys)
                .map(|(c, &y)| {
                    c.probs().get(y).copied().ok_or(Error::LabelOutOfRange {
                        label: y,
                        classes: c.len(),
                    })
                })
                .collect()
        };
        let unc =
            |cs: &[ConfidenceVector]| -> Result<Vec<f64>> { cs.iter().map(uncertainty).collect() };
        Ok(Self {
            bins,
            confidence: gap_stats(
                &correct(members, member_labels)?,
                &correct(nonmembers, nonmember_labels)?,
                bins,
            )?,
            uncertainty: gap_stats(&unc(members)?, &unc(nonmembers)?, bins)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScatterPoint {
    pub x: f64,
    pub y: f64,
    pub label: usize,
    pub is_member: bool,
}

/// Latent codes projected to the plane: the first two latent coordinates
/// (the second is 0 for a one-dimensional latent space).
pub fn latent_scatter(
    reformer: &ConfidenceReformer,
    confs: &[ConfidenceVector],
    labels: &[usize],
    is_member: &[bool],
    mode: NoiseMode,
) -> Result<Vec<ScatterPoint>> {
    if confs.len() != labels.len() || confs.len() != is_member.len() {
        return Err(Error::Dimension(
            "scatter needs one label and one flag per confidence".into(),
        ));
    }
    if confs.is_empty() {
        return Ok(Vec::new());
    }
    let z = reformer.latent(confs, mode)?;
    Ok(z.row_iter()
        .zip(labels.iter().zip(is_member))
        .map(|(r, (&label, &is_member))| ScatterPoint {
            x: r[0] as f64,
            y: r.get(1).map_or(0.0, |&v| v as f64),
            label,
            is_member,
        })
        .collect())
}

pub fn write_scatter_csv(points: &[ScatterPoint], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for p in points {
        w.serialize(p)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    crate::experiment::write_atomic(path, &bytes)
}

/// Mean distance from each point to its class centroid.
pub fn dispersion(points: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    if points.is_empty() || points.len() != labels.len() {
        return Err(Error::InsufficientData(
            "dispersion needs labelled points".into(),
        ));
    }
    let dim = points[0].len();
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut centroid = vec![vec![0.0; dim]; classes];
    let mut count = vec![0usize; classes];
    for (p, &l) in points.iter().zip(labels) {
        centroid[l].iter_mut().zip(p).for_each(|(c, v)| *c += v);
        count[l] += 1;
    }
    for (c, &n) in centroid.iter_mut().zip(&count) {
        c.iter_mut().for_each(|v| *v /= n.max(1) as f64);
    }
    let total: f64 = points
        .iter()
        .zip(labels)
        .map(|(p, &l)| crate::purifier::l2(p, &centroid[l]))
        .sum();
    Ok(total / points.len() as f64)
}

/// Dispersion of the latent codes the reformer actually decodes (noise
/// included) over the dispersion of the clean codes.
pub fn dispersion_ratio(
    reformer: &ConfidenceReformer,
    confs: &[ConfidenceVector],
    labels: &[usize],
    salt: u64,
) -> Result<f64> {
    let clean = reformer.latent(confs, NoiseMode::Zero)?.to_f64_rows();
    let noisy = reformer
        .latent(confs, NoiseMode::Sample { salt })?
        .to_f64_rows();
    let base = dispersion(&clean, labels)?;
    if base <= 0.0 {
        return Err(Error::Degenerate(
            "clean latent codes coincide within every class".into(),
        ));
    }
    Ok(dispersion(&noisy, labels)? / base)
}

/// Defense cost relative to the bare target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Efficiency {
    pub train_ratio: f64,
    pub test_ratio: f64,
}

/// Times are `(train, test)` seconds.
pub fn efficiency(target: (f64, f64), defense: (f64, f64)) -> Result<Efficiency> {
    if !(target.0 > 0.0 && target.1 > 0.0) {
        return Err(Error::Degenerate("baseline times must be positive".into()));
    }
    Ok(Efficiency {
        train_ratio: defense.0 / target.0,
        test_ratio: defense.1 / target.1,
    })
}
