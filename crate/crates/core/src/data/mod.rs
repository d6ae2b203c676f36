//! Labeled datasets, synthetic task generators, CSV ingestion and the
//! train / reference / test / attacker allocation.

mod csv_io;
mod split;
mod synth;

pub use csv_io::{load_csv, save_csv, CsvSchema};
pub use split::{split, SplitPlan, Splits};
pub use synth::{synthesize, synthesize_with_components, Generator, SensitiveSpec, SynthSpec};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nncore::{Matrix, Scalar};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataPoint {
    pub features: Vec<f64>,
    pub label: usize,
    pub sensitive: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    /// Feature dimension.
    pub d: usize,
    /// Number of classes.
    pub k: usize,
    /// Number of sensitive-attribute classes, when present.
    pub s: Option<usize>,
    points: Vec<DataPoint>,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        k: usize,
        s: Option<usize>,
        points: Vec<DataPoint>,
    ) -> Result<Self> {
        let first = points
            .first()
            .ok_or_else(|| Error::InsufficientData("dataset has no points".into()))?;
        let d = first.features.len();
        for (i, p) in points.iter().enumerate() {
            if p.features.len() != d {
                return Err(Error::Dimension(format!(
                    "point {i} has {} features, expected {d}",
                    p.features.len()
                )));
            }
            if p.label >= k {
                return Err(Error::LabelOutOfRange {
                    label: p.label,
                    classes: k,
                });
            }
            match (p.sensitive, s) {
                (Some(v), Some(s)) if v >= s => {
                    return Err(Error::LabelOutOfRange {
                        label: v,
                        classes: s,
                    })
                }
                (Some(_), None) | (None, Some(_)) => {
                    return Err(Error::Dimension(format!(
                        "point {i} sensitive attribute inconsistent with dataset"
                    )))
                }
                _ => {}
            }
            if p.features.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("point {i} features")));
            }
        }
        Ok(Self {
            name: name.into(),
            d,
            k,
            s,
            points,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[DataPoint] {
        &self.points
    }

    pub fn point(&self, i: usize) -> &DataPoint {
        &self.points[i]
    }

    pub fn features<T: Scalar>(&self, idx: &[usize]) -> Matrix<T> {
        let rows: Vec<&[f64]> = idx.iter().map(|&i| &self.points[i].features[..]).collect();
        if rows.is_empty() {
            return Matrix::zeros(0, self.d);
        }
        Matrix::from_f64_rows(&rows).expect("dataset rows are homogeneous and finite")
    }

    pub fn labels(&self, idx: &[usize]) -> Vec<usize> {
        idx.iter().map(|&i| self.points[i].label).collect()
    }

    pub fn sensitive(&self, idx: &[usize]) -> Option<Vec<usize>> {
        idx.iter().map(|&i| self.points[i].sensitive).collect()
    }

    pub fn all_indices(&self) -> Vec<usize> {
        (0..self.len()).collect()
    }
}
