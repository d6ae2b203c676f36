//! Losses with mean-over-batch reduction. Each loss returns its value and the
//! gradient with respect to the network's (post-activation) output.

use super::matrix::{Matrix, Scalar};
use crate::error::{dim_err, Error, Result};

/// Probability floor applied before taking logarithms.
pub const PROB_EPS: f64 = 1e-12;

/// Row-wise softmax with the max-logit shift.
pub fn softmax_rows<T: Scalar>(logits: &Matrix<T>) -> Matrix<T> {
    let mut out = logits.clone();
    let c = out.cols();
    if c == 0 {
        return out;
    }
    for row in out.data_mut().chunks_exact_mut(c) {
        softmax_in_place(row);
    }
    out
}

pub fn softmax_in_place<T: Scalar>(row: &mut [T]) {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v = *v / sum;
    }
}

/// Mean categorical cross-entropy of probability rows against class labels.
pub fn cross_entropy<T: Scalar>(pred: &Matrix<T>, labels: &[usize]) -> Result<T> {
    check_labels(pred, labels)?;
    let eps = T::of(PROB_EPS);
    let n = T::of(pred.rows() as f64);
    let total: T = labels
        .iter()
        .enumerate()
        .map(|(i, &l)| -pred.get(i, l).max(eps).ln())
        .sum();
    finite(total / n, "cross-entropy")
}

/// Mean of squared element differences.
pub fn mse<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>) -> Result<T> {
    if a.shape() != b.shape() {
        return Err(dim_err(format!(
            "mse of {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let n = a.data().len();
    if n == 0 {
        return Ok(T::zero());
    }
    let total: T = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum();
    finite(total / T::of(n as f64), "mse")
}

fn check_labels<T: Scalar>(pred: &Matrix<T>, labels: &[usize]) -> Result<()> {
    if labels.len() != pred.rows() {
        return Err(dim_err(format!(
            "{} labels for {} predictions",
            labels.len(),
            pred.rows()
        )));
    }
    if let Some(&l) = labels.iter().find(|&&l| l >= pred.cols()) {
        return Err(Error::LabelOutOfRange {
            label: l,
            classes: pred.cols(),
        });
    }
    Ok(())
}

fn finite<T: Scalar>(v: T, what: &str) -> Result<T> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite(format!("{what} loss is {v}")))
    }
}

/// Training objective applied to a network's output.
#[derive(Debug, Clone, Copy)]
pub enum Loss<'a, T> {
    /// Output rows are probabilities; targets are class ids.
    CrossEntropy {
        labels: &'a [usize],
    },
    Mse {
        target: &'a Matrix<T>,
    },
    /// Reconstruction plus weighted label loss: `mse(p, target) + lambda * ce(p, labels)`.
    Composite {
        target: &'a Matrix<T>,
        labels: &'a [usize],
        lambda: T,
    },
    /// Single-column probability output against 0/1 targets.
    BinaryCrossEntropy {
        targets: &'a [T],
    },
}

impl<'a, T: Scalar> Loss<'a, T> {
    pub fn evaluate(&self, pred: &Matrix<T>) -> Result<(T, Matrix<T>)> {
        let (rows, cols) = pred.shape();
        let eps = T::of(PROB_EPS);
        match *self {
            Loss::CrossEntropy { labels } => {
                let value = cross_entropy(pred, labels)?;
                let mut grad = Matrix::zeros(rows, cols);
                ce_grad(pred, labels, T::one(), &mut grad, eps);
                Ok((value, grad))
            }
            Loss::Mse { target } => {
                let value = mse(pred, target)?;
                let mut grad = Matrix::zeros(rows, cols);
                mse_grad(pred, target, &mut grad);
                Ok((value, grad))
            }
            Loss::Composite {
                target,
                labels,
                lambda,
            } => {
                let rec = mse(pred, target)?;
                let ce = cross_entropy(pred, labels)?;
                let mut grad = Matrix::zeros(rows, cols);
                mse_grad(pred, target, &mut grad);
                ce_grad(pred, labels, lambda, &mut grad, eps);
                Ok((finite(rec + lambda * ce, "composite")?, grad))
            }
            Loss::BinaryCrossEntropy { targets } => {
                if cols != 1 || targets.len() != rows {
                    return Err(dim_err(format!(
                        "binary cross-entropy on {rows}x{cols} output with {} targets",
                        targets.len()
                    )));
                }
                let n = T::of(rows.max(1) as f64);
                let mut total = T::zero();
                let mut grad = Matrix::zeros(rows, 1);
                for (i, &t) in targets.iter().enumerate() {
                    let p = pred.get(i, 0);
                    let p_hi = p.max(eps);
                    let q_hi = (T::one() - p).max(eps);
                    total -= t * p_hi.ln() + (T::one() - t) * q_hi.ln();
                    let mut g = T::zero();
                    if p >= eps {
                        g -= t / p;
                    }
                    if T::one() - p >= eps {
                        g += (T::one() - t) / (T::one() - p);
                    }
                    grad.set(i, 0, g / n);
                }
                Ok((finite(total / n, "binary cross-entropy")?, grad))
            }
        }
    }
}

fn ce_grad<T: Scalar>(pred: &Matrix<T>, labels: &[usize], scale: T, grad: &mut Matrix<T>, eps: T) {
    let n = T::of(pred.rows().max(1) as f64);
    for (i, &l) in labels.iter().enumerate() {
        let p = pred.get(i, l);
        // the clamp is flat below eps
        if p >= eps {
            let g = grad.get(i, l) - scale / (p * n);
            grad.set(i, l, g);
        }
    }
}

fn mse_grad<T: Scalar>(pred: &Matrix<T>, target: &Matrix<T>, grad: &mut Matrix<T>) {
    let n = T::of(pred.data().len().max(1) as f64);
    let two = T::of(2.0);
    for ((g, &p), &t) in grad
        .data_mut()
        .iter_mut()
        .zip(pred.data())
        .zip(target.data())
    {
        *g += two * (p - t) / n;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn m(rows: &[&[f64]]) -> Matrix<f64> {
        Matrix::from_rows(rows).unwrap()
    }

    #[test]
    fn cross_entropy_examples() {
        assert_abs_diff_eq!(cross_entropy(&m(&[&[1.0, 0.0, 0.0]]), &[0]).unwrap(), 0.0);
        let uniform = m(&[&[0.25; 4]]);
        for l in 0..4 {
            assert_abs_diff_eq!(
                cross_entropy(&uniform, &[l]).unwrap(),
                4f64.ln(),
                epsilon = 1e-12
            );
        }
        assert_abs_diff_eq!(
            cross_entropy(&m(&[&[0.5, 0.5]]), &[1]).unwrap(),
            std::f64::consts::LN_2,
            epsilon = 1e-12
        );
        assert!(matches!(
            cross_entropy(&m(&[&[0.5, 0.5]]), &[2]),
            Err(Error::LabelOutOfRange {
                label: 2,
                classes: 2
            })
        ));
    }

    #[test]
    fn cross_entropy_clamps_zero_probability() {
        let v = cross_entropy(&m(&[&[0.0, 1.0]]), &[0]).unwrap();
        assert_abs_diff_eq!(v, -(PROB_EPS.ln()), epsilon = 1e-9);
    }

    #[test]
    fn mse_examples() {
        assert_eq!(mse(&m(&[&[1.0, 2.0]]), &m(&[&[1.0, 2.0]])).unwrap(), 0.0);
        assert_eq!(mse(&m(&[&[0.0, 0.0]]), &m(&[&[1.0, 1.0]])).unwrap(), 1.0);
        assert_abs_diff_eq!(
            mse(&m(&[&[1.0, 2.0, 3.0]]), &m(&[&[1.0, 2.0, 5.0]])).unwrap(),
            4.0 / 3.0,
            epsilon = 1e-15
        );
        assert!(mse(&m(&[&[1.0]]), &m(&[&[1.0, 2.0]])).is_err());
    }

    #[test]
    fn softmax_is_stable_and_normalized() {
        let z = m(&[
            &[0.0, 0.0, 0.0],
            &[50.0, -50.0, 0.0],
            &[1000.0, 999.0, -1000.0],
        ]);
        let p = softmax_rows(&z);
        for r in p.row_iter() {
            assert!(r.iter().all(|v| *v >= 0.0 && v.is_finite()));
            assert_abs_diff_eq!(r.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(p.get(0, 1), 1.0 / 3.0, epsilon = 1e-15);
    }
}
