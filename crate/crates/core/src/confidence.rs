use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nncore::argmax;

/// Tolerance on the simplex sum.
pub const SIMPLEX_TOL: f64 = 1e-6;

/// A point on the probability simplex: one score per class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConfidenceVector(Vec<f64>);

impl ConfidenceVector {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Dimension("empty confidence vector".into()));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::Degenerate(
                "confidence entries must be finite and non-negative".into(),
            ));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::Degenerate(format!("confidence sums to {sum}")));
        }
        Ok(Self(probs))
    }

    pub fn uniform(k: usize) -> Self {
        Self(vec![1.0 / k as f64; k])
    }

    pub fn one_hot(k: usize, class: usize) -> Self {
        let mut v = vec![0.0; k];
        v[class] = 1.0;
        Self(v)
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Predicted class; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }

    /// Indices of the largest and second-largest entries, ties to lower index.
    pub fn top_two(&self) -> Option<(usize, usize)> {
        if self.0.len() < 2 {
            return None;
        }
        let first = self.argmax();
        let mut second = if first == 0 { 1 } else { 0 };
        for (i, &p) in self.0.iter().enumerate() {
            if i != first && p > self.0[second] {
                second = i;
            }
        }
        Some((first, second))
    }

    /// Entries sorted in descending order, truncated to `n`.
    pub fn top_sorted(&self, n: usize) -> Vec<f64> {
        let mut v = self.0.clone();
        v.sort_by(|a, b| b.total_cmp(a));
        v.truncate(n);
        v
    }

    pub fn distance(&self, other: &[f64]) -> f64 {
        self.0
            .iter()
            .zip(other)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

impl AsRef<[f64]> for ConfidenceVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validates_simplex() {
        assert!(ConfidenceVector::new(vec![0.5, 0.5]).is_ok());
        assert!(ConfidenceVector::new(vec![0.5, 0.6]).is_err());
        assert!(ConfidenceVector::new(vec![-0.1, 1.1]).is_err());
        assert!(ConfidenceVector::new(vec![]).is_err());
    }

    #[test]
    fn top_two_ties_go_low() {
        let u = ConfidenceVector::uniform(4);
        assert_eq!(u.top_two(), Some((0, 1)));
        let v = ConfidenceVector::new(vec![0.1, 0.6, 0.3]).unwrap();
        assert_eq!(v.top_two(), Some((1, 2)));
        let w = ConfidenceVector::new(vec![0.2, 0.2, 0.6]).unwrap();
        assert_eq!(w.top_two(), Some((2, 0)));
    }
}
