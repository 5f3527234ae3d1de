use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{AnswerSet, Query, QueryBatch, Responder, Template};
use crate::datasets::corrupt_label_vector;
use crate::error::{PalError, Result};
use crate::rng::{self, Rng};

/// Anything that answers query batches.
pub trait Labeler {
    fn answer(&mut self, batch: &QueryBatch) -> Result<AnswerSet>;

    /// Hidden labels and class count, for wrappers that corrupt them.
    fn hidden_labels_mut(&mut self) -> Option<(&mut [usize], usize)> {
        None
    }
}

/// Truthful answers from hidden ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedLabeler {
    labels: Vec<usize>,
    classes: usize,
}

impl SimulatedLabeler {
    pub fn new(labels: Vec<usize>) -> Self {
        let classes = labels.iter().max().map_or(1, |&m| m + 1);
        SimulatedLabeler { labels, classes }
    }

    pub fn with_classes(labels: Vec<usize>, classes: usize) -> Result<Self> {
        if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
            return Err(PalError::IndexOutOfRange {
                index: bad,
                bound: classes,
            });
        }
        Ok(SimulatedLabeler { labels, classes })
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    fn label(&self, i: usize) -> Result<usize> {
        self.labels.get(i).copied().ok_or(PalError::IndexOutOfRange {
            index: i,
            bound: self.labels.len(),
        })
    }
}

impl Labeler for SimulatedLabeler {
    fn answer(&mut self, batch: &QueryBatch) -> Result<AnswerSet> {
        let answers = match &batch.query {
            Query::Pairs { pairs, .. } => pairs
                .iter()
                .map(|&(i, j)| Ok(self.label(i)? == self.label(j)?))
                .collect::<Result<Vec<_>>>()?,
            Query::Template {
                template, candidates, ..
            } => {
                let target = match template {
                    Template::Node { index } => self.label(*index)?,
                    Template::Exemplar { label, .. } => *label,
                };
                candidates
                    .iter()
                    .map(|&i| Ok(self.label(i)? == target))
                    .collect::<Result<Vec<_>>>()?
            }
        };
        Ok(AnswerSet {
            batch_id: batch.id,
            answers,
            responder: Responder::Simulated,
        })
    }

    fn hidden_labels_mut(&mut self) -> Option<(&mut [usize], usize)> {
        Some((&mut self.labels, self.classes))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    /// Flip each answer independently.
    #[default]
    PerAnswer,
    /// Reassign `floor(p N)` hidden labels once, then answer truthfully.
    CorruptLabels,
}

/// Wraps a labeler with answer noise or label corruption.
#[derive(Debug, Clone)]
pub struct NoisyLabeler<L> {
    inner: L,
    p: f64,
    mode: NoiseMode,
    rng: Rng,
    corrupted: Vec<usize>,
}

impl<L: Labeler> NoisyLabeler<L> {
    pub fn new(mut inner: L, p: f64, mode: NoiseMode, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(PalError::invalid(format!("flip probability {p} outside [0, 1]")));
        }
        let mut rng = rng::stream(seed, rng::LABEL_NOISE);
        let mut corrupted = Vec::new();
        if mode == NoiseMode::CorruptLabels {
            let (labels, classes) = inner
                .hidden_labels_mut()
                .ok_or_else(|| PalError::invalid("inner labeler exposes no labels to corrupt"))?;
            if classes > 1 {
                corrupted = corrupt_label_vector(labels, classes, p, &mut rng)?;
            }
        }
        Ok(NoisyLabeler {
            inner,
            p,
            mode,
            rng,
            corrupted,
        })
    }

    /// Indices whose hidden label was reassigned.
    pub fn corrupted(&self) -> &[usize] {
        &self.corrupted
    }

    pub fn inner(&self) -> &L {
        &self.inner
    }
}

impl<L: Labeler> Labeler for NoisyLabeler<L> {
    fn answer(&mut self, batch: &QueryBatch) -> Result<AnswerSet> {
        let mut out = self.inner.answer(batch)?;
        if self.mode == NoiseMode::PerAnswer && self.p > 0.0 {
            for a in &mut out.answers {
                if self.rng.random::<f64>() < self.p {
                    *a = !*a;
                }
            }
        }
        Ok(out)
    }

    fn hidden_labels_mut(&mut self) -> Option<(&mut [usize], usize)> {
        self.inner.hidden_labels_mut()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::{passive_supervised_oracle, OracleState};

    fn pair_batch(pairs: Vec<(usize, usize)>) -> QueryBatch {
        QueryBatch {
            id: 0,
            query: Query::Pairs {
                pairs,
                auto_positive: false,
            },
            reg_pairs: Vec::new(),
        }
    }

    #[test]
    fn truthful_pairs_and_templates() {
        let mut l = SimulatedLabeler::new(vec![0, 1, 0, 2]);
        let a = l.answer(&pair_batch(vec![(0, 2), (0, 1)])).unwrap();
        assert_eq!(a.answers, vec![true, false]);
        let t = QueryBatch {
            id: 3,
            query: Query::Template {
                class: 0,
                template: Template::Exemplar { label: 0, display: None },
                candidates: vec![0, 1, 2, 3],
            },
            reg_pairs: Vec::new(),
        };
        let a = l.answer(&t).unwrap();
        assert_eq!(a.answers, vec![true, false, true, false]);
        assert_eq!(a.batch_id, 3);
        assert!(l.answer(&pair_batch(vec![(0, 9)])).is_err());
    }

    #[test]
    fn node_template_compares_hidden_labels() {
        let mut l = SimulatedLabeler::new(vec![1, 1, 0]);
        let t = QueryBatch {
            id: 0,
            query: Query::Template {
                class: 0,
                template: Template::Node { index: 0 },
                candidates: vec![1, 2],
            },
            reg_pairs: Vec::new(),
        };
        assert_eq!(l.answer(&t).unwrap().answers, vec![true, false]);
    }

    #[test]
    fn zero_noise_is_identity() {
        let labels: Vec<usize> = (0..40).map(|i| i % 3).collect();
        for mode in [NoiseMode::PerAnswer, NoiseMode::CorruptLabels] {
            let mut s = OracleState::new(40, 3, 5);
            let b = passive_supervised_oracle(&mut s, 50);
            let clean = SimulatedLabeler::new(labels.clone()).answer(&b).unwrap();
            let mut noisy = NoisyLabeler::new(SimulatedLabeler::new(labels.clone()), 0.0, mode, 9).unwrap();
            assert_eq!(noisy.answer(&b).unwrap(), clean);
            assert!(noisy.corrupted().is_empty());
        }
    }

    #[test]
    fn full_flip_inverts() {
        let labels: Vec<usize> = (0..10).map(|i| i % 2).collect();
        let mut s = OracleState::new(10, 2, 0);
        let b = passive_supervised_oracle(&mut s, 30);
        let clean = SimulatedLabeler::new(labels.clone()).answer(&b).unwrap();
        let mut noisy = NoisyLabeler::new(SimulatedLabeler::new(labels), 1.0, NoiseMode::PerAnswer, 0).unwrap();
        let flipped = noisy.answer(&b).unwrap();
        assert!(clean.answers.iter().zip(&flipped.answers).all(|(a, b)| a != b));
    }

    #[test]
    fn corrupt_labels_count() {
        let labels: Vec<usize> = (0..300).map(|i| i % 3).collect();
        let noisy = NoisyLabeler::new(
            SimulatedLabeler::with_classes(labels.clone(), 3).unwrap(),
            0.1,
            NoiseMode::CorruptLabels,
            1,
        )
        .unwrap();
        assert_eq!(noisy.corrupted().len(), 30);
        let changed = labels
            .iter()
            .zip(noisy.inner().labels())
            .filter(|(a, b)| a != b)
            .count();
        assert_eq!(changed, 30);
    }

    #[test]
    fn rejects_bad_probability() {
        assert!(NoisyLabeler::new(SimulatedLabeler::new(vec![0]), 1.5, NoiseMode::PerAnswer, 0).is_err());
    }
}
