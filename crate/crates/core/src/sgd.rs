//! Minibatch training of a linear model on random Fourier features.
//!
//! The model is `Z = Phi theta` with `Phi` the N x F feature matrix, and each
//! step applies `theta <- theta - gamma_t * grad_theta vic2_stochastic` on the
//! pair sets drawn for that step. The gradient is the plain sum over the
//! drawn pairs, so schedules that want a per-pair rate divide by the batch.

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{PalError, Result};
use crate::graph::SimilarityGraph;
use crate::losses::{invariance_grad, reg_grad, reg_term, Embedding, PairIndexSets};
use crate::rng::Rng;

pub const DEFAULT_FEATURES: usize = 256;
pub const DIVERGENCE_LIMIT: f64 = 1e12;

/// `phi(x) = sqrt(2 / F) cos(x omega + b)`, approximating the Gaussian kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMap {
    /// D x F frequencies drawn from `N(0, bandwidth^-2)`.
    pub omega: DMatrix<f64>,
    /// F phases drawn from `U[0, 2 pi)`.
    pub phase: DVector<f64>,
}

impl FeatureMap {
    pub fn random_fourier(input_dim: usize, count: usize, bandwidth: f64, rng: &mut Rng) -> Result<Self> {
        if count == 0 || input_dim == 0 {
            return Err(PalError::invalid("feature map needs input_dim and count >= 1"));
        }
        if !(bandwidth > 0.0) {
            return Err(PalError::invalid("bandwidth must be positive"));
        }
        let omega = DMatrix::from_fn(input_dim, count, |_, _| {
            let v: f64 = StandardNormal.sample(rng);
            v / bandwidth
        });
        let phase = DVector::from_fn(count, |_, _| rng.random::<f64>() * std::f64::consts::TAU);
        Ok(FeatureMap { omega, phase })
    }

    pub fn count(&self) -> usize {
        self.phase.len()
    }

    pub fn transform(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.omega.nrows() {
            return Err(PalError::DimensionMismatch {
                context: "feature map input",
                expected: self.omega.nrows(),
                found: x.ncols(),
            });
        }
        let scale = (2.0 / self.count() as f64).sqrt();
        let mut p = x * &self.omega;
        for mut r in p.row_iter_mut() {
            for (c, v) in r.iter_mut().enumerate() {
                *v = scale * (*v + self.phase[c]).cos();
            }
        }
        Ok(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Schedule {
    Constant { rate: f64 },
    /// `rate * (1 - t / horizon)`, floored at zero.
    LinearDecay { rate: f64, horizon: usize },
    /// `rate / sqrt(1 + t)`.
    InverseSqrt { rate: f64 },
}

impl Schedule {
    pub fn rate(&self, t: usize) -> f64 {
        match *self {
            Schedule::Constant { rate } => rate,
            Schedule::LinearDecay { rate, horizon } => {
                if horizon == 0 {
                    0.0
                } else {
                    rate * (1.0 - t as f64 / horizon as f64).max(0.0)
                }
            }
            Schedule::InverseSqrt { rate } => rate / (1.0 + t as f64).sqrt(),
        }
    }
}

/// Draws the `(I_t, J_t)` sets for one step.
pub trait PairSampler {
    /// Called once per training call with the graph that call trains on.
    fn prepare(&mut self, _g: &SimilarityGraph) {}
    fn sample(&mut self, rng: &mut Rng) -> PairIndexSets;
}

/// `batch` pairs uniform on `[N]^2`, used for both `I_t` and `J_t`.
#[derive(Debug, Clone)]
pub struct UniformPairs {
    pub n: usize,
    pub batch: usize,
}

impl PairSampler for UniformPairs {
    fn sample(&mut self, rng: &mut Rng) -> PairIndexSets {
        let pairs = (0..self.batch)
            .map(|_| (rng.random_range(0..self.n), rng.random_range(0..self.n)))
            .collect();
        PairIndexSets::same(pairs)
    }
}

/// `batch` pairs drawn from the graph's known entries, used for both sets.
///
/// Falls back to uniform pairs while nothing is known.
#[derive(Debug, Clone)]
pub struct KnownPairs {
    pub batch: usize,
    n: usize,
    known: Vec<(usize, usize)>,
}

impl KnownPairs {
    pub fn new(batch: usize) -> Self {
        KnownPairs {
            batch,
            n: 0,
            known: Vec::new(),
        }
    }
}

impl PairSampler for KnownPairs {
    fn prepare(&mut self, g: &SimilarityGraph) {
        self.n = g.n();
        self.known = g.known().map(|(i, j, _)| (i, j)).collect();
    }

    fn sample(&mut self, rng: &mut Rng) -> PairIndexSets {
        if self.known.is_empty() {
            return UniformPairs {
                n: self.n,
                batch: self.batch,
            }
            .sample(rng);
        }
        let pairs = (0..self.batch)
            .map(|_| self.known[rng.random_range(0..self.known.len())])
            .collect();
        PairIndexSets::same(pairs)
    }
}

/// Linear head `theta` (F x K) and the global step counter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgdTrainer {
    pub theta: DMatrix<f64>,
    pub step: usize,
    pub schedule: Schedule,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgdReport {
    pub steps: usize,
    /// Stochastic loss of the last minibatch.
    pub last_batch_loss: f64,
}

impl SgdTrainer {
    /// `theta_0 = init_scale * N(0, 1)`.
    pub fn new(features: usize, embed_dim: usize, init_scale: f64, schedule: Schedule, rng: &mut Rng) -> Self {
        let theta = DMatrix::from_fn(features, embed_dim, |_, _| {
            let v: f64 = StandardNormal.sample(rng);
            init_scale * v
        });
        SgdTrainer {
            theta,
            step: 0,
            schedule,
        }
    }

    pub fn embedding(&self, phi: &DMatrix<f64>) -> Result<Embedding> {
        Embedding::new(phi * &self.theta)
    }

    /// Run `steps` updates on graph `g`, continuing the global step count.
    pub fn train(
        &mut self,
        g: &SimilarityGraph,
        phi: &DMatrix<f64>,
        steps: usize,
        sampler: &mut dyn PairSampler,
        rng: &mut Rng,
    ) -> Result<SgdReport> {
        let n = phi.nrows();
        if g.n() != n {
            return Err(PalError::DimensionMismatch {
                context: "sgd_train",
                expected: g.n(),
                found: n,
            });
        }
        if phi.ncols() != self.theta.nrows() {
            return Err(PalError::DimensionMismatch {
                context: "sgd features",
                expected: self.theta.nrows(),
                found: phi.ncols(),
            });
        }
        if phi.iter().any(|v| !v.is_finite()) {
            return Err(PalError::NonFinite("features"));
        }
        sampler.prepare(g);
        let dense = g.dense();
        let (f, k) = (self.theta.nrows(), self.theta.ncols());
        // Row-major copies: features per sample and theta per feature.
        let phi_rows: Vec<f64> = phi.transpose().as_slice().to_vec();
        let mut theta_rows: Vec<f64> = self.theta.transpose().as_slice().to_vec();

        let mut slot = vec![usize::MAX; n];
        let mut touched: Vec<usize> = Vec::new();
        let mut z: Vec<f64> = Vec::new();
        let mut grad: Vec<f64> = Vec::new();
        let mut gi = vec![0.0; k];
        let mut gj = vec![0.0; k];
        let mut last_loss = 0.0;

        for _ in 0..steps {
            let pairs = sampler.sample(rng);
            pairs.validate(n)?;
            touched.clear();
            for &(i, j) in pairs.i_set.iter().chain(&pairs.j_set) {
                for r in [i, j] {
                    if slot[r] == usize::MAX {
                        slot[r] = touched.len();
                        touched.push(r);
                    }
                }
            }
            z.clear();
            z.resize(touched.len() * k, 0.0);
            for (s, &r) in touched.iter().enumerate() {
                let pr = &phi_rows[r * f..(r + 1) * f];
                let zr = &mut z[s * k..(s + 1) * k];
                for (a, &p) in pr.iter().enumerate() {
                    if p != 0.0 {
                        let tr = &theta_rows[a * k..(a + 1) * k];
                        for c in 0..k {
                            zr[c] += p * tr[c];
                        }
                    }
                }
            }
            grad.clear();
            grad.resize(touched.len() * k, 0.0);
            let mut loss = 0.0;
            for &(i, j) in &pairs.i_set {
                let w = dense[(i, j)];
                if w == 0.0 {
                    continue;
                }
                let (si, sj) = (slot[i], slot[j]);
                let zi = &z[si * k..(si + 1) * k];
                let zj = &z[sj * k..(sj + 1) * k];
                loss += w * zi.iter().zip(zj).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
                invariance_grad(w, zi, zj, &mut gi, &mut gj);
                flush(&mut grad, si, sj, k, &mut gi, &mut gj);
            }
            for &(i, j) in &pairs.j_set {
                let (si, sj) = (slot[i], slot[j]);
                let zi = &z[si * k..(si + 1) * k];
                let zj = &z[sj * k..(sj + 1) * k];
                loss += reg_term(zi, zj);
                reg_grad(zi, zj, &mut gi, &mut gj);
                flush(&mut grad, si, sj, k, &mut gi, &mut gj);
            }
            if !loss.is_finite() || loss.abs() > DIVERGENCE_LIMIT {
                return Err(PalError::Diverged {
                    step: self.step,
                    loss,
                });
            }
            last_loss = loss;
            let rate = self.schedule.rate(self.step);
            if rate != 0.0 {
                for (s, &r) in touched.iter().enumerate() {
                    let pr = &phi_rows[r * f..(r + 1) * f];
                    let gr = &grad[s * k..(s + 1) * k];
                    for (a, &p) in pr.iter().enumerate() {
                        let tr = &mut theta_rows[a * k..(a + 1) * k];
                        let scale = rate * p;
                        for c in 0..k {
                            tr[c] -= scale * gr[c];
                        }
                    }
                }
            }
            for &r in &touched {
                slot[r] = usize::MAX;
            }
            self.step += 1;
        }
        self.theta = DMatrix::from_row_slice(f, k, &theta_rows);
        if self.theta.iter().any(|v| !v.is_finite()) {
            return Err(PalError::Diverged {
                step: self.step,
                loss: f64::INFINITY,
            });
        }
        Ok(SgdReport {
            steps,
            last_batch_loss: last_loss,
        })
    }
}

#[inline]
fn flush(grad: &mut [f64], si: usize, sj: usize, k: usize, gi: &mut [f64], gj: &mut [f64]) {
    for c in 0..k {
        grad[si * k + c] += gi[c];
        grad[sj * k + c] += gj[c];
        gi[c] = 0.0;
        gj[c] = 0.0;
    }
}

/// Train from a fresh `theta_0` and return `Phi theta_T`.
pub fn sgd_train(
    g: &SimilarityGraph,
    phi: &DMatrix<f64>,
    schedule: Schedule,
    steps: usize,
    embed_dim: usize,
    sampler: &mut dyn PairSampler,
    rng: &mut Rng,
) -> Result<Embedding> {
    if steps == 0 {
        return Err(PalError::invalid("sgd_train needs at least one step"));
    }
    let mut trainer = SgdTrainer::new(phi.ncols(), embed_dim, 0.01, schedule, rng);
    trainer.train(g, phi, steps, sampler, rng)?;
    trainer.embedding(phi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_sup_graph;
    use crate::labels::LabelMatrix;
    use crate::rng::stream;

    fn setup() -> (SimilarityGraph, DMatrix<f64>) {
        let labels = LabelMatrix::from_labels_auto(&[0, 1, 0, 1, 0, 1]);
        let g = build_sup_graph(&labels).unwrap();
        let x = DMatrix::from_fn(6, 2, |i, j| (i * 2 + j) as f64 * 0.1);
        let fm = FeatureMap::random_fourier(2, 32, 0.5, &mut stream(1, 0)).unwrap();
        (g, fm.transform(&x).unwrap())
    }

    #[test]
    fn zero_rate_leaves_theta() {
        let (g, phi) = setup();
        let mut rng = stream(3, 0);
        let mut t = SgdTrainer::new(32, 3, 0.01, Schedule::Constant { rate: 0.0 }, &mut rng);
        let before = t.embedding(&phi).unwrap();
        t.train(&g, &phi, 50, &mut UniformPairs { n: 6, batch: 4 }, &mut rng)
            .unwrap();
        assert_eq!(t.embedding(&phi).unwrap(), before);
        assert_eq!(t.step, 50);
    }

    #[test]
    fn same_seed_same_output() {
        let (g, phi) = setup();
        let run = || {
            let mut rng = stream(9, 0);
            sgd_train(
                &g,
                &phi,
                Schedule::Constant { rate: 0.01 },
                200,
                3,
                &mut UniformPairs { n: 6, batch: 8 },
                &mut rng,
            )
            .unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn divergence_is_detected() {
        let (g, phi) = setup();
        let mut rng = stream(2, 0);
        let err = sgd_train(
            &g,
            &phi,
            Schedule::Constant { rate: 1e6 },
            500,
            3,
            &mut UniformPairs { n: 6, batch: 8 },
            &mut rng,
        )
        .unwrap_err();
        assert!(matches!(err, PalError::Diverged { .. }));
    }

    #[test]
    fn schedules() {
        let s = Schedule::LinearDecay { rate: 1.0, horizon: 4 };
        assert_eq!(s.rate(0), 1.0);
        assert_eq!(s.rate(2), 0.5);
        assert_eq!(s.rate(9), 0.0);
        assert_eq!(Schedule::InverseSqrt { rate: 2.0 }.rate(3), 1.0);
    }

    #[test]
    fn known_pairs_sample_known_entries() {
        let mut g = SimilarityGraph::new(5);
        g.set(1, 3, 1.0).unwrap();
        let mut s = KnownPairs::new(10);
        s.prepare(&g);
        let p = s.sample(&mut stream(0, 0));
        assert!(p.i_set.iter().all(|&e| e == (1, 3)));
        let mut empty = KnownPairs::new(3);
        empty.prepare(&SimilarityGraph::new(5));
        assert_eq!(empty.sample(&mut stream(0, 0)).i_set.len(), 3);
    }

    #[test]
    fn features_have_expected_scale() {
        let fm = FeatureMap::random_fourier(2, 4096, 0.5, &mut stream(4, 0)).unwrap();
        let x = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.3, 0.1]);
        let p = fm.transform(&x).unwrap();
        // Inner products approximate the Gaussian kernel.
        let k01 = p.row(0).dot(&p.row(1));
        let exact = (-(0.09 + 0.01) / (2.0 * 0.25f64)).exp();
        assert!((k01 - exact).abs() < 0.05, "{k01} vs {exact}");
        assert!((p.row(0).norm_squared() - 1.0).abs() < 0.05);
    }
}
