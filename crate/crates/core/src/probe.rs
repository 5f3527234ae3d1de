//! Ridge linear probe on one-hot targets.
//!
//! MSE is averaged over samples and output coordinates.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{PalError, Result};
use crate::labels::LabelMatrix;
use crate::linalg::spd_solve;
use crate::losses::Embedding;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearProbe {
    /// C x K.
    pub weights: DMatrix<f64>,
    pub intercept: DVector<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeError {
    pub mse: f64,
    pub zero_one: f64,
}

/// Minimise `||Z W^T + b - Y||^2 + ridge ||W||^2`; the intercept is not penalised.
pub fn fit_linear_probe(z: &Embedding, labels: &LabelMatrix, ridge: f64) -> Result<LinearProbe> {
    if z.n() != labels.n() {
        return Err(PalError::DimensionMismatch {
            context: "fit_linear_probe",
            expected: z.n(),
            found: labels.n(),
        });
    }
    if !(ridge >= 0.0) {
        return Err(PalError::invalid("probe ridge must be non-negative"));
    }
    labels.to_labels()?;
    let y = labels.one_hot();
    let zm = z.matrix();
    let z_mean = zm.row_mean();
    let y_mean = y.row_mean();
    let mut zc = zm.clone();
    for mut r in zc.row_iter_mut() {
        r -= &z_mean;
    }
    let mut yc = y;
    for mut r in yc.row_iter_mut() {
        r -= &y_mean;
    }
    let k = z.k();
    let gram = zc.transpose() * &zc + DMatrix::<f64>::identity(k, k) * ridge;
    let rhs = zc.transpose() * yc;
    let w = spd_solve(&gram, &rhs, "probe normal equations")?; // K x C
    let intercept = (y_mean - &z_mean * &w).transpose();
    Ok(LinearProbe {
        weights: w.transpose(),
        intercept,
    })
}

impl LinearProbe {
    pub fn classes(&self) -> usize {
        self.weights.nrows()
    }

    /// N x C scores.
    pub fn predict(&self, z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if z.ncols() != self.weights.ncols() {
            return Err(PalError::DimensionMismatch {
                context: "probe input",
                expected: self.weights.ncols(),
                found: z.ncols(),
            });
        }
        let mut p = z * self.weights.transpose();
        for mut r in p.row_iter_mut() {
            r += self.intercept.transpose();
        }
        Ok(p)
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Error of raw scores against one-hot targets.
pub fn score_error(scores: &DMatrix<f64>, labels: &[usize]) -> Result<ProbeError> {
    if scores.nrows() != labels.len() {
        return Err(PalError::DimensionMismatch {
            context: "probe_error",
            expected: scores.nrows(),
            found: labels.len(),
        });
    }
    let (n, c) = (scores.nrows(), scores.ncols());
    if n == 0 || c == 0 {
        return Err(PalError::invalid("empty evaluation set"));
    }
    let mut sq = 0.0;
    let mut wrong = 0usize;
    for i in 0..n {
        if labels[i] >= c {
            return Err(PalError::IndexOutOfRange {
                index: labels[i],
                bound: c,
            });
        }
        let row: Vec<f64> = scores.row(i).iter().copied().collect();
        for (k, &s) in row.iter().enumerate() {
            let t = if k == labels[i] { 1.0 } else { 0.0 };
            sq += (s - t) * (s - t);
        }
        if argmax(&row) != labels[i] {
            wrong += 1;
        }
    }
    Ok(ProbeError {
        mse: sq / (n * c) as f64,
        zero_one: wrong as f64 / n as f64,
    })
}

pub fn probe_error(probe: &LinearProbe, z_test: &DMatrix<f64>, labels_test: &LabelMatrix) -> Result<ProbeError> {
    let labels = labels_test.to_labels()?;
    score_error(&probe.predict(z_test)?, &labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_hot_embedding_is_fit_exactly() {
        let labels = LabelMatrix::from_labels_auto(&[0, 1, 2, 1, 0]);
        let z = Embedding::new(labels.one_hot()).unwrap();
        let p = fit_linear_probe(&z, &labels, 1e-12).unwrap();
        let e = probe_error(&p, z.matrix(), &labels).unwrap();
        assert!(e.mse < 1e-20);
        assert_eq!(e.zero_one, 0.0);
    }

    #[test]
    fn zero_embedding_predicts_class_frequencies() {
        let labels = LabelMatrix::from_labels_auto(&[0, 1, 2, 3, 0, 1, 2, 3]);
        let z = Embedding::new(DMatrix::zeros(8, 3)).unwrap();
        let p = fit_linear_probe(&z, &labels, 1e-6).unwrap();
        assert!(p.intercept.iter().all(|&b| (b - 0.25).abs() < 1e-15));
        let e = probe_error(&p, z.matrix(), &labels).unwrap();
        assert!((e.mse - 3.0 / 16.0).abs() < 1e-15);
        assert_eq!(e.zero_one, 0.75);
    }

    #[test]
    fn ridge_zero_rank_deficient_is_signalled() {
        let labels = LabelMatrix::from_labels_auto(&[0, 1]);
        let z = Embedding::new(DMatrix::zeros(2, 2)).unwrap();
        assert!(matches!(fit_linear_probe(&z, &labels, 0.0), Err(PalError::Singular(_))));
    }

    #[test]
    fn one_flip_in_ten() {
        let labels: Vec<usize> = (0..10).map(|i| i % 2).collect();
        let mut scores = DMatrix::zeros(10, 2);
        for (i, &c) in labels.iter().enumerate() {
            scores[(i, c)] = 1.0;
        }
        scores[(3, 0)] = 1.0;
        scores[(3, 1)] = 0.0;
        assert_eq!(score_error(&scores, &labels).unwrap().zero_one, 0.1);
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[0.5, 0.5, 0.1]), 0);
        assert_eq!(argmax(&[0.1, 0.5, 0.5]), 1);
    }

    #[test]
    fn unlabeled_rows_rejected() {
        let labels = LabelMatrix::new(2, vec![Some(0), None]).unwrap();
        let z = Embedding::new(DMatrix::zeros(2, 1)).unwrap();
        assert!(fit_linear_probe(&z, &labels, 1e-6).is_err());
    }
}
