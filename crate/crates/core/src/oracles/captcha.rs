use std::sync::Arc;

use rand::seq::index::sample;

use super::{OracleState, Query, QueryBatch};
use crate::error::{PalError, Result};
use crate::graph::Member;
use crate::labels::LabelMatrix;
use crate::probe::fit_linear_probe;
use crate::rng::Rng;

/// What a batch sampler may look at.
pub struct SamplerContext<'a> {
    pub class: usize,
    pub state: &'a OracleState,
}

/// Chooses up to `m` of the eligible `candidates` (sorted ascending).
pub trait BatchSampler: Send + Sync + std::fmt::Debug {
    fn select(&self, ctx: &SamplerContext<'_>, candidates: &[usize], m: usize, rng: &mut Rng) -> Result<Vec<usize>>;
}

/// Uniform without replacement.
#[derive(Debug, Clone, Copy, Default)]
pub struct UniformBatch;

impl BatchSampler for UniformBatch {
    fn select(&self, _ctx: &SamplerContext<'_>, candidates: &[usize], m: usize, rng: &mut Rng) -> Result<Vec<usize>> {
        let m = m.min(candidates.len());
        Ok(sample(rng, candidates.len(), m)
            .into_iter()
            .map(|k| candidates[k])
            .collect())
    }
}

/// Ranks candidates by a ridge probe's score for the target class.
///
/// The probe is fit on the snapshot rows whose class is already confirmed.
/// Without a snapshot, or with fewer than two confirmed classes, it falls back
/// to [`UniformBatch`].
#[derive(Debug, Clone, Copy)]
pub struct ConfidenceSampler {
    pub ridge: f64,
}

impl Default for ConfidenceSampler {
    fn default() -> Self {
        ConfidenceSampler { ridge: 1e-6 }
    }
}

impl BatchSampler for ConfidenceSampler {
    fn select(&self, ctx: &SamplerContext<'_>, candidates: &[usize], m: usize, rng: &mut Rng) -> Result<Vec<usize>> {
        let state = ctx.state;
        let Some(z) = state.embedding_snapshot.as_ref().filter(|z| z.n() == state.n()) else {
            return UniformBatch.select(ctx, candidates, m, rng);
        };
        let confirmed: Vec<(usize, usize)> = (0..state.n())
            .filter_map(|i| state.membership.yes_class(i).map(|c| (i, c)))
            .collect();
        let mut seen = vec![false; state.classes()];
        for &(_, c) in &confirmed {
            seen[c] = true;
        }
        if seen.iter().filter(|&&s| s).count() < 2 {
            return UniformBatch.select(ctx, candidates, m, rng);
        }
        let rows: Vec<Vec<f64>> = confirmed.iter().map(|&(i, _)| z.row(i)).collect();
        let labels: Vec<usize> = confirmed.iter().map(|&(_, c)| c).collect();
        let sub = crate::losses::Embedding::from_rows(&rows)?;
        let probe = fit_linear_probe(&sub, &LabelMatrix::from_labels(&labels, state.classes())?, self.ridge)?;
        let scores = probe.predict(z.matrix())?;
        let mut ranked: Vec<(f64, usize)> = candidates
            .iter()
            .map(|&i| (scores[(i, ctx.class)], i))
            .collect();
        ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        Ok(ranked.into_iter().take(m).map(|(_, i)| i).collect())
    }
}

/// Nodes with no confirmed class and an Unknown cell at `class`.
pub fn captcha_candidates(state: &OracleState, class: usize) -> Vec<usize> {
    (0..state.n())
        .filter(|&i| !state.membership.is_determined(i) && state.membership.get(i, class) == Member::Unknown)
        .collect()
}

/// Class with the fewest confirmed members (divided by `prior` when given)
/// among classes that have a template and at least one candidate. Ties go to
/// the lowest class id.
pub fn target_class(state: &OracleState, prior: Option<&[f64]>) -> Option<usize> {
    let counts = state.membership.yes_counts();
    let mut order: Vec<(f64, usize)> = counts
        .iter()
        .enumerate()
        .map(|(c, &k)| {
            let w = prior.map_or(1.0, |p| p[c]);
            (k as f64 / w, c)
        })
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    order
        .into_iter()
        .map(|(_, c)| c)
        .find(|&c| state.templates[c].is_some() && !captcha_candidates(state, c).is_empty())
}

/// Template-versus-batch oracle.
#[derive(Debug, Clone)]
pub struct CaptchaOracle {
    pub batch_size: usize,
    /// Class probabilities for the weighted target choice.
    pub prior: Option<Vec<f64>>,
    pub sampler: Arc<dyn BatchSampler>,
}

impl CaptchaOracle {
    pub fn new(batch_size: usize) -> Self {
        CaptchaOracle {
            batch_size,
            prior: None,
            sampler: Arc::new(UniformBatch),
        }
    }

    pub fn with_prior(mut self, prior: Vec<f64>) -> Self {
        self.prior = Some(prior);
        self
    }

    pub fn with_sampler(mut self, sampler: Arc<dyn BatchSampler>) -> Self {
        self.sampler = sampler;
        self
    }

    pub fn next(&self, state: &mut OracleState) -> Result<QueryBatch> {
        self.next_limited(state, self.batch_size)
    }

    /// Like [`next`](Self::next) with the batch capped at `limit` candidates.
    pub fn next_limited(&self, state: &mut OracleState, limit: usize) -> Result<QueryBatch> {
        if self.batch_size == 0 || limit == 0 {
            return Err(PalError::invalid("captcha batch size must be positive"));
        }
        if let Some(p) = &self.prior {
            if p.len() != state.classes() {
                return Err(PalError::DimensionMismatch {
                    context: "captcha prior",
                    expected: state.classes(),
                    found: p.len(),
                });
            }
            if p.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
                return Err(PalError::invalid("captcha prior entries must be positive"));
            }
        }
        let class = target_class(state, self.prior.as_deref()).ok_or(PalError::Exhausted)?;
        let eligible = captcha_candidates(state, class);
        let m = self.batch_size.min(limit);
        let mut rng = state.rng().clone();
        let mut chosen = {
            let ctx = SamplerContext { class, state };
            self.sampler.select(&ctx, &eligible, m, &mut rng)?
        };
        *state.rng() = rng;
        if chosen.is_empty() || chosen.len() > m || chosen.iter().any(|i| eligible.binary_search(i).is_err()) {
            return Err(PalError::invalid("batch sampler returned an ineligible selection"));
        }
        chosen.sort_unstable();
        chosen.dedup();
        let template = state.templates[class].clone().expect("target class has a template");
        Ok(state.issue(
            Query::Template {
                class,
                template,
                candidates: chosen,
            },
            Vec::new(),
        ))
    }
}
