use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng as _;

use super::{BatchSampler, CaptchaOracle, OracleState, QueryBatch, SamplerContext};
use crate::error::{PalError, Result};
use crate::linalg::squared_distance;
use crate::rng::{self, Rng};

pub const KMEANS_MAX_ITER: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    /// k x D.
    pub centers: DMatrix<f64>,
    pub assignment: Vec<usize>,
    pub iterations: usize,
}

/// `1 - cos(a, b)`; 1 when either vector is zero.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> f64 {
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 1.0;
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    1.0 - dot / (na * nb)
}

/// k-means++ seeding then Lloyd iterations. An empty cluster triggers one
/// re-seed; a second one is reported as degenerate.
pub fn kmeans(points: &DMatrix<f64>, k: usize, rng: &mut Rng) -> Result<KMeans> {
    let n = points.nrows();
    if k == 0 || k > n {
        return Err(PalError::invalid(format!("cannot form {k} clusters from {n} points")));
    }
    let rows: Vec<Vec<f64>> = (0..n).map(|i| points.row(i).iter().copied().collect()).collect();
    for _ in 0..2 {
        if let Some(km) = lloyd(&rows, k, rng) {
            return Ok(km);
        }
    }
    Err(PalError::DegenerateClustering)
}

fn nearest(p: &[f64], centers: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut bd = f64::INFINITY;
    for (c, ctr) in centers.iter().enumerate() {
        let d = squared_distance(p, ctr);
        if d < bd {
            bd = d;
            best = c;
        }
    }
    best
}

fn lloyd(rows: &[Vec<f64>], k: usize, rng: &mut Rng) -> Option<KMeans> {
    let n = rows.len();
    let dim = rows[0].len();
    let mut centers = vec![rows[rng.random_range(0..n)].clone()];
    while centers.len() < k {
        let d2: Vec<f64> = rows
            .iter()
            .map(|p| centers.iter().map(|c| squared_distance(p, c)).fold(f64::INFINITY, f64::min))
            .collect();
        let total: f64 = d2.iter().sum();
        if !(total > 0.0) {
            return None;
        }
        let mut u = rng.random::<f64>() * total;
        let mut pick = n - 1;
        for (i, &d) in d2.iter().enumerate() {
            if d > 0.0 && u < d {
                pick = i;
                break;
            }
            u -= d;
        }
        centers.push(rows[pick].clone());
    }
    let mut assignment: Vec<usize> = rows.iter().map(|p| nearest(p, &centers)).collect();
    let mut iterations = 0;
    for _ in 0..KMEANS_MAX_ITER {
        iterations += 1;
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &c) in rows.iter().zip(&assignment) {
            counts[c] += 1;
            for (s, v) in sums[c].iter_mut().zip(p) {
                *s += v;
            }
        }
        if counts.contains(&0) {
            return None;
        }
        for c in 0..k {
            centers[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
        }
        let next: Vec<usize> = rows.iter().map(|p| nearest(p, &centers)).collect();
        if next == assignment {
            break;
        }
        assignment = next;
    }
    Some(KMeans {
        centers: DMatrix::from_fn(k, dim, |r, c| centers[r][c]),
        assignment,
        iterations,
    })
}

/// Batch proposal by distance to k-means centers of the embedding snapshot.
///
/// Below `threshold` labeled fraction the points nearest their center are
/// chosen, otherwise the farthest. Ties go to the lower index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PruningSampler {
    pub k: usize,
    pub threshold: f64,
}

impl PruningSampler {
    pub fn new(k: usize) -> Self {
        PruningSampler { k, threshold: 0.1 }
    }

    pub fn near_branch(&self, state: &OracleState) -> bool {
        (state.membership.determined_count() as f64 / state.n() as f64) < self.threshold
    }
}

impl BatchSampler for PruningSampler {
    fn select(&self, ctx: &SamplerContext<'_>, candidates: &[usize], m: usize, _rng: &mut Rng) -> Result<Vec<usize>> {
        let state = ctx.state;
        let z = state.embedding_snapshot.as_ref().ok_or(PalError::MissingSnapshot)?;
        let mut krng = rng::stream(state.seed, rng::CLUSTERING);
        let km = kmeans(z.matrix(), self.k, &mut krng)?;
        let mut scored: Vec<(f64, usize)> = candidates
            .iter()
            .map(|&i| {
                let center: Vec<f64> = km.centers.row(km.assignment[i]).iter().copied().collect();
                (cosine_distance(&z.row(i), &center), i)
            })
            .collect();
        if self.near_branch(state) {
            scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        } else {
            scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        }
        Ok(scored.into_iter().take(m).map(|(_, i)| i).collect())
    }
}

/// Template query whose batch comes from [`PruningSampler`].
pub fn pruning_oracle(state: &mut OracleState, k: usize, threshold: f64, batch: usize) -> Result<QueryBatch> {
    if state.embedding_snapshot.is_none() {
        return Err(PalError::MissingSnapshot);
    }
    if k == 0 {
        return Err(PalError::invalid("pruning oracle needs k >= 1"));
    }
    CaptchaOracle::new(batch)
        .with_sampler(Arc::new(PruningSampler { k, threshold }))
        .next(state)
}
