//! SSL losses written against a similarity graph, their per-pair originals,
//! and the gradients the training path needs.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{PalError, Result};
use crate::graph::SimilarityGraph;

/// Dense N x K representation, one row per sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct Embedding(DMatrix<f64>);

impl Embedding {
    pub fn new(z: DMatrix<f64>) -> Result<Self> {
        if z.nrows() == 0 || z.ncols() == 0 {
            return Err(PalError::invalid("embedding needs N >= 1 and K >= 1"));
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(PalError::NonFinite("embedding"));
        }
        Ok(Embedding(z))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let k = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != k) {
            return Err(PalError::invalid("ragged embedding rows"));
        }
        Self::new(DMatrix::from_fn(rows.len(), k, |i, j| rows[i][j]))
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn k(&self) -> usize {
        self.0.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.0.row(i).iter().copied().collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n()).map(|i| self.row(i)).collect()
    }
}

impl TryFrom<Vec<Vec<f64>>> for Embedding {
    type Error = PalError;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Embedding::from_rows(&rows)
    }
}

impl From<Embedding> for Vec<Vec<f64>> {
    fn from(e: Embedding) -> Self {
        e.to_rows()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossConfig {
    /// SimCLR temperature.
    pub tau: f64,
    /// VICReg variance-hinge weight.
    pub alpha: f64,
    /// VICReg covariance weight.
    pub beta: f64,
    /// BarlowTwins off-diagonal weight.
    pub lambda_bt: f64,
    /// Covariance divisor is `rows - ddof` over the stacked views.
    pub cov_ddof: f64,
    /// Leave `k = i` out of the SimCLR log-sum-exp.
    pub simclr_exclude_self: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            tau: 1.0,
            alpha: 1.0,
            beta: 1.0,
            lambda_bt: 1.0,
            cov_ddof: 1.0,
            simclr_exclude_self: true,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("tau", self.tau),
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("lambda_bt", self.lambda_bt),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(PalError::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Index sets `I` (invariance) and `J` (regularisation) over `[N]^2`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairIndexSets {
    pub i_set: Vec<(usize, usize)>,
    pub j_set: Vec<(usize, usize)>,
}

impl PairIndexSets {
    pub fn same(pairs: Vec<(usize, usize)>) -> Self {
        PairIndexSets {
            j_set: pairs.clone(),
            i_set: pairs,
        }
    }

    /// Every ordered pair in both sets.
    pub fn all(n: usize) -> Self {
        let pairs: Vec<_> = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).collect();
        Self::same(pairs)
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        for &(i, j) in self.i_set.iter().chain(&self.j_set) {
            let bad = i.max(j);
            if bad >= n {
                return Err(PalError::IndexOutOfRange { index: bad, bound: n });
            }
        }
        Ok(())
    }
}

fn check_nodes(z: &Embedding, g: &SimilarityGraph, context: &'static str) -> Result<()> {
    if z.n() != g.n() {
        return Err(PalError::DimensionMismatch {
            context,
            expected: g.n(),
            found: z.n(),
        });
    }
    Ok(())
}

fn check_same_shape(z1: &Embedding, z2: &Embedding, context: &'static str) -> Result<()> {
    if z1.n() != z2.n() {
        return Err(PalError::DimensionMismatch {
            context,
            expected: z1.n(),
            found: z2.n(),
        });
    }
    if z1.k() != z2.k() {
        return Err(PalError::DimensionMismatch {
            context,
            expected: z1.k(),
            found: z2.k(),
        });
    }
    Ok(())
}

/// `||Z Z^T - G||_F^2`.
pub fn vic2_loss(z: &Embedding, g: &SimilarityGraph) -> Result<f64> {
    check_nodes(z, g, "vic2_loss")?;
    let z = z.matrix();
    Ok((z * z.transpose() - g.dense()).norm_squared())
}

/// `-2 Tr(G Z Z^T) + ||Z Z^T||_F^2`, which is `vic2_loss` minus `||G||_F^2`.
pub fn spectral_graph_loss(z: &Embedding, g: &SimilarityGraph) -> Result<f64> {
    check_nodes(z, g, "spectral_graph_loss")?;
    let zm = z.matrix();
    let gram = zm * zm.transpose();
    Ok(-2.0 * g.dense().dot(&gram) + gram.norm_squared())
}

/// Spectral contrastive loss over two views.
pub fn spectral_contrastive_loss(z1: &Embedding, z2: &Embedding) -> Result<f64> {
    check_same_shape(z1, z2, "spectral_contrastive_loss")?;
    let n = z1.n();
    let cross = z1.matrix() * z2.matrix().transpose();
    let mut off = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                off += cross[(i, j)] * cross[(i, j)];
            }
        }
    }
    Ok(-2.0 * cross.trace() + off / n as f64)
}

fn row_normalized(z: &Embedding) -> Result<DMatrix<f64>> {
    let mut m = z.matrix().clone();
    for (i, mut r) in m.row_iter_mut().enumerate() {
        let norm = r.norm();
        if norm == 0.0 {
            return Err(PalError::ZeroNorm { what: "row", index: i });
        }
        r /= norm;
    }
    Ok(m)
}

fn column_normalized(z: &Embedding) -> Result<DMatrix<f64>> {
    let mut m = z.matrix().clone();
    for (j, mut c) in m.column_iter_mut().enumerate() {
        let norm = c.norm();
        if norm == 0.0 {
            return Err(PalError::ZeroNorm {
                what: "column",
                index: j,
            });
        }
        c /= norm;
    }
    Ok(m)
}

/// `-sum_ij G_ij log softmax_k(cos(z_i, z_k) / tau)_j`.
///
/// With `exclude_self` the softmax runs over `k != i` and diagonal graph
/// weights are skipped, since `j = i` is then outside the support.
pub fn simclr_graph_loss(z: &Embedding, g: &SimilarityGraph, tau: f64, exclude_self: bool) -> Result<f64> {
    check_nodes(z, g, "simclr_graph_loss")?;
    if !(tau > 0.0) {
        return Err(PalError::invalid("tau must be positive"));
    }
    let zt = row_normalized(z)?;
    let s = (&zt * zt.transpose()) / tau;
    let n = z.n();
    let lse: Vec<f64> = (0..n)
        .map(|i| {
            let ks = (0..n).filter(|&k| !(exclude_self && k == i));
            let max = ks.clone().map(|k| s[(i, k)]).fold(f64::NEG_INFINITY, f64::max);
            if max == f64::NEG_INFINITY {
                return f64::NEG_INFINITY;
            }
            max + ks.map(|k| (s[(i, k)] - max).exp()).sum::<f64>().ln()
        })
        .collect();
    let mut loss = 0.0;
    for (a, b, w) in g.known() {
        if w == 0.0 {
            continue;
        }
        if a == b {
            if !exclude_self {
                loss -= w * (s[(a, a)] - lse[a]);
            }
            continue;
        }
        loss -= w * (s[(a, b)] - lse[a]);
        loss -= w * (s[(b, a)] - lse[b]);
    }
    Ok(loss)
}

/// `||Z~^T G Z~ - I||_F^2` with unit-norm columns.
pub fn barlow_twins_graph_loss(z: &Embedding, g: &SimilarityGraph) -> Result<f64> {
    check_nodes(z, g, "barlow_twins_graph_loss")?;
    let zt = column_normalized(z)?;
    let m = zt.transpose() * g.dense() * &zt;
    Ok((m - DMatrix::<f64>::identity(z.k(), z.k())).norm_squared())
}

fn covariance(stacked: &DMatrix<f64>, ddof: f64) -> Result<DMatrix<f64>> {
    let rows = stacked.nrows() as f64;
    let denom = rows - ddof;
    if !(denom > 0.0) {
        return Err(PalError::invalid("covariance divisor must be positive"));
    }
    let mean = stacked.row_mean();
    let mut centered = stacked.clone();
    for mut r in centered.row_iter_mut() {
        r -= &mean;
    }
    Ok(centered.transpose() * &centered / denom)
}

/// VICReg over two views, covariance taken over the stacked `2N` rows.
pub fn vicreg_original_loss(z1: &Embedding, z2: &Embedding, cfg: &LossConfig) -> Result<f64> {
    check_same_shape(z1, z2, "vicreg_original_loss")?;
    cfg.validate()?;
    let n = z1.n();
    if n < 2 {
        return Err(PalError::invalid("VICReg covariance needs N >= 2"));
    }
    let k = z1.k();
    let stacked = DMatrix::from_fn(2 * n, k, |r, c| {
        if r < n {
            z1.matrix()[(r, c)]
        } else {
            z2.matrix()[(r - n, c)]
        }
    });
    let cov = covariance(&stacked, cfg.cov_ddof)?;
    let mut hinge = 0.0;
    let mut off = 0.0;
    for a in 0..k {
        hinge += (1.0 - cov[(a, a)].max(0.0).sqrt()).max(0.0);
        for b in 0..k {
            if a != b {
                off += cov[(a, b)] * cov[(a, b)];
            }
        }
    }
    let invariance = (z1.matrix() - z2.matrix()).norm_squared() / n as f64;
    Ok(cfg.alpha * hinge + cfg.beta * off + invariance)
}

/// BarlowTwins over two views: cross-correlation of standardised columns.
pub fn barlow_twins_original_loss(z1: &Embedding, z2: &Embedding, cfg: &LossConfig) -> Result<f64> {
    check_same_shape(z1, z2, "barlow_twins_original_loss")?;
    cfg.validate()?;
    let standardize = |z: &Embedding| -> Result<DMatrix<f64>> {
        let mut m = z.matrix().clone();
        let mean = m.row_mean();
        for mut r in m.row_iter_mut() {
            r -= &mean;
        }
        for (j, mut c) in m.column_iter_mut().enumerate() {
            let norm = c.norm();
            if norm == 0.0 {
                return Err(PalError::ZeroNorm {
                    what: "column",
                    index: j,
                });
            }
            c /= norm;
        }
        Ok(m)
    };
    let c = standardize(z1)?.transpose() * standardize(z2)?;
    let mut loss = 0.0;
    for a in 0..c.nrows() {
        for b in 0..c.ncols() {
            if a == b {
                loss += (1.0 - c[(a, a)]).powi(2);
            } else {
                loss += cfg.lambda_bt * c[(a, b)].powi(2);
            }
        }
    }
    Ok(loss)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `R(a, b) = (a^T b)^2 - ||a||^2 - ||b||^2`.
pub fn reg_term(a: &[f64], b: &[f64]) -> f64 {
    let ab = dot(a, b);
    ab * ab - dot(a, a) - dot(b, b)
}

/// `sum_I G_ij ||z_i - z_j||^2 + sum_J R(z_i, z_j)`.
pub fn vic2_stochastic(z: &Embedding, g: &SimilarityGraph, pairs: &PairIndexSets) -> Result<f64> {
    check_nodes(z, g, "vic2_stochastic")?;
    pairs.validate(z.n())?;
    let zm = z.matrix();
    let mut loss = 0.0;
    for &(i, j) in &pairs.i_set {
        let w = g.get(i, j).value_or_zero();
        if w != 0.0 {
            loss += w * (zm.row(i) - zm.row(j)).norm_squared();
        }
    }
    for &(i, j) in &pairs.j_set {
        loss += reg_term(&z.row(i), &z.row(j));
    }
    Ok(loss)
}

/// `4 (Z Z^T - G) Z`.
pub fn vic2_gradient(z: &Embedding, g: &SimilarityGraph) -> Result<DMatrix<f64>> {
    check_nodes(z, g, "vic2_gradient")?;
    let zm = z.matrix();
    Ok(4.0 * (zm * zm.transpose() - g.dense()) * zm)
}

/// Accumulate the gradient of one invariance pair into `gi`, `gj`.
#[inline]
pub(crate) fn invariance_grad(w: f64, zi: &[f64], zj: &[f64], gi: &mut [f64], gj: &mut [f64]) {
    for c in 0..zi.len() {
        let d = 2.0 * w * (zi[c] - zj[c]);
        gi[c] += d;
        gj[c] -= d;
    }
}

/// Accumulate the gradient of one `R(z_i, z_j)` term into `gi`, `gj`.
#[inline]
pub(crate) fn reg_grad(zi: &[f64], zj: &[f64], gi: &mut [f64], gj: &mut [f64]) {
    let ab = dot(zi, zj);
    for c in 0..zi.len() {
        gi[c] += 2.0 * ab * zj[c] - 2.0 * zi[c];
        gj[c] += 2.0 * ab * zi[c] - 2.0 * zj[c];
    }
}

/// Gradient of [`vic2_stochastic`] with respect to `Z`.
pub fn stochastic_gradient(z: &Embedding, g: &SimilarityGraph, pairs: &PairIndexSets) -> Result<DMatrix<f64>> {
    check_nodes(z, g, "stochastic_gradient")?;
    pairs.validate(z.n())?;
    let (n, k) = (z.n(), z.k());
    // Row-major scratch so pair updates can borrow two rows at once.
    let mut grad = vec![0.0; n * k];
    let rows: Vec<Vec<f64>> = z.to_rows();
    let mut gi = vec![0.0; k];
    let mut gj = vec![0.0; k];
    let flush = |grad: &mut [f64], i: usize, j: usize, gi: &mut [f64], gj: &mut [f64]| {
        for c in 0..k {
            grad[i * k + c] += gi[c];
            grad[j * k + c] += gj[c];
            gi[c] = 0.0;
            gj[c] = 0.0;
        }
    };
    for &(i, j) in &pairs.i_set {
        let w = g.get(i, j).value_or_zero();
        if w != 0.0 {
            invariance_grad(w, &rows[i], &rows[j], &mut gi, &mut gj);
            flush(&mut grad, i, j, &mut gi, &mut gj);
        }
    }
    for &(i, j) in &pairs.j_set {
        reg_grad(&rows[i], &rows[j], &mut gi, &mut gj);
        flush(&mut grad, i, j, &mut gi, &mut gj);
    }
    Ok(DMatrix::from_row_slice(n, k, &grad))
}
