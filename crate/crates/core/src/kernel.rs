//! Closed-form embeddings from a graph and a Gaussian kernel.
//!
//! The training embedding is the top spectral decomposition of
//! `M = G - lambda (K + jitter I)^-1`, scaled so that `Z Z^T` approximates the
//! positive part of `M`. Dual coefficients `A = (K + jitter I)^-1 Z` extend it
//! to new points as `f(x) = k(x, X) A`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{PalError, Result};
use crate::graph::SimilarityGraph;
use crate::linalg::{spd_inverse, sym_eigen, symmetrize};
use crate::losses::Embedding;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelConfig {
    pub bandwidth: f64,
    pub ridge: f64,
    pub jitter: f64,
    pub embed_dim: usize,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig {
            bandwidth: 0.5,
            ridge: 1e-6,
            jitter: 1e-8,
            embed_dim: 5,
        }
    }
}

impl KernelConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth > 0.0 && self.bandwidth.is_finite()) {
            return Err(PalError::invalid("bandwidth must be positive"));
        }
        if !(self.ridge >= 0.0 && self.ridge.is_finite()) {
            return Err(PalError::invalid("ridge must be non-negative"));
        }
        if !(self.jitter > 0.0 && self.jitter.is_finite()) {
            return Err(PalError::invalid("jitter must be positive"));
        }
        if self.embed_dim == 0 {
            return Err(PalError::invalid("embed_dim must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KernelModel {
    pub train_points: DMatrix<f64>,
    pub dual_coefficients: DMatrix<f64>,
    pub config: KernelConfig,
    /// Training embedding `Z`.
    pub embedding: Embedding,
    /// Leading eigenvalues of `M`, descending; one more than `embed_dim` when
    /// the graph is large enough, so the gap after the kept block is known.
    pub eigenvalues: Vec<f64>,
    /// Kept columns whose eigenvalue was clipped to zero.
    pub clipped: usize,
}

impl KernelModel {
    /// `lambda_K - lambda_{K+1}`; `None` when the graph has only `K` nodes.
    pub fn eigengap(&self) -> Option<f64> {
        let k = self.config.embed_dim;
        (self.eigenvalues.len() > k).then(|| self.eigenvalues[k - 1] - self.eigenvalues[k])
    }

    /// Columns with a strictly positive eigenvalue.
    pub fn rank(&self) -> usize {
        self.eigenvalues
            .iter()
            .take(self.config.embed_dim)
            .filter(|&&v| v > 0.0)
            .count()
    }
}

fn check_points(x: &DMatrix<f64>, what: &'static str) -> Result<()> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(PalError::NonFinite(what));
    }
    Ok(())
}

/// `k(a_i, b_j) = exp(-||a_i - b_j||^2 / (2 bandwidth^2))`.
pub fn cross_kernel(a: &DMatrix<f64>, b: &DMatrix<f64>, bandwidth: f64) -> Result<DMatrix<f64>> {
    if a.ncols() != b.ncols() {
        return Err(PalError::DimensionMismatch {
            context: "kernel input dimension",
            expected: b.ncols(),
            found: a.ncols(),
        });
    }
    if !(bandwidth > 0.0) {
        return Err(PalError::invalid("bandwidth must be positive"));
    }
    let scale = -1.0 / (2.0 * bandwidth * bandwidth);
    Ok(DMatrix::from_fn(a.nrows(), b.nrows(), |i, j| {
        let d2: f64 = a
            .row(i)
            .iter()
            .zip(b.row(j).iter())
            .map(|(p, q)| (p - q) * (p - q))
            .sum();
        (d2 * scale).exp()
    }))
}

pub fn gaussian_kernel_matrix(x: &DMatrix<f64>, bandwidth: f64) -> Result<DMatrix<f64>> {
    let mut k = cross_kernel(x, x, bandwidth)?;
    symmetrize(&mut k);
    Ok(k)
}

/// `M = G - lambda (K + jitter I)^-1`, symmetrized, plus the regularized inverse.
fn spectral_operator(
    g: &SimilarityGraph,
    x: &DMatrix<f64>,
    cfg: &KernelConfig,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    cfg.validate()?;
    if g.n() != x.nrows() {
        return Err(PalError::DimensionMismatch {
            context: "solve_embedding",
            expected: g.n(),
            found: x.nrows(),
        });
    }
    check_points(x, "training points")?;
    let n = x.nrows();
    let k = gaussian_kernel_matrix(x, cfg.bandwidth)? + DMatrix::<f64>::identity(n, n) * cfg.jitter;
    let k_inv = spd_inverse(&k, "regularized kernel matrix")?;
    let mut m = g.dense() - &k_inv * cfg.ridge;
    symmetrize(&mut m);
    Ok((m, k_inv))
}

pub fn solve_embedding(g: &SimilarityGraph, x: &DMatrix<f64>, cfg: &KernelConfig) -> Result<KernelModel> {
    let (m, k_inv) = spectral_operator(g, x, cfg)?;
    let n = x.nrows();
    let eig = sym_eigen(&m)?;
    let dim = cfg.embed_dim;
    let mut z = DMatrix::zeros(n, dim);
    let mut clipped = 0;
    for c in 0..dim.min(n) {
        let lambda = eig.values[c];
        if lambda <= 0.0 {
            if lambda < 0.0 {
                clipped += 1;
            }
            continue;
        }
        let s = lambda.sqrt();
        for r in 0..n {
            z[(r, c)] = eig.vectors[(r, c)] * s;
        }
    }
    let keep = (dim + 1).min(n);
    let eigenvalues = eig.values.iter().take(keep).copied().collect();
    let dual_coefficients = &k_inv * &z;
    Ok(KernelModel {
        train_points: x.clone(),
        dual_coefficients,
        config: *cfg,
        embedding: Embedding::new(z)?,
        eigenvalues,
        clipped,
    })
}

/// Count of strictly positive eigenvalues of `M`.
pub fn positive_eigen_count(g: &SimilarityGraph, x: &DMatrix<f64>, cfg: &KernelConfig) -> Result<usize> {
    let (m, _) = spectral_operator(g, x, cfg)?;
    Ok(sym_eigen(&m)?.values.iter().filter(|&&v| v > 0.0).count())
}

/// `f(x) = k(x, X) A` for each row of `x_new`.
pub fn evaluate_embedding(model: &KernelModel, x_new: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_points(x_new, "evaluation points")?;
    let k = cross_kernel(x_new, &model.train_points, model.config.bandwidth)?;
    Ok(k * &model.dual_coefficients)
}
