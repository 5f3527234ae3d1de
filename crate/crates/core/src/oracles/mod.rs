//! Query strategies and labelers.
//!
//! An oracle reads an [`OracleState`] and emits a [`QueryBatch`]; a
//! [`Labeler`] answers it; [`OracleState::ingest`] folds the answers back into
//! the graph. Batches carry increasing ids and the state only accepts answers
//! for the batch it issued last.

mod captcha;
mod labeler;
mod nnclr;
mod passive;
mod pruning;
mod queue;
mod templates;

use serde::{Deserialize, Serialize};

use crate::error::{PalError, Result};
use crate::graph::{
    Conflict, ConflictPolicy, Deducer, EntryState, Member, Membership, NewEntry, Relation,
    SimilarityGraph,
};
use crate::losses::Embedding;
use crate::rng::{self, Rng, RngPosition};

pub use captcha::{captcha_candidates, target_class, BatchSampler, CaptchaOracle, ConfidenceSampler, SamplerContext, UniformBatch};
pub use labeler::{Labeler, NoiseMode, NoisyLabeler, SimulatedLabeler};
pub use nnclr::nnclr_oracle;
pub use passive::{passive_ssl_oracle, passive_supervised_oracle, ssl_pair};
pub use pruning::{cosine_distance, kmeans, pruning_oracle, KMeans, PruningSampler};
pub use queue::{AnswerQueue, HumanLabeler};
pub use templates::{discover_templates, TemplateDiscovery};

/// What a class template shows the labeler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Template {
    /// A training node whose class is already confirmed.
    Node { index: usize },
    /// An outside example of the class, with optional display coordinates.
    Exemplar { label: usize, display: Option<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Query {
    /// Same-class questions about explicit pairs. `auto_positive` pairs are
    /// positive by construction and never reach a labeler.
    Pairs {
        pairs: Vec<(usize, usize)>,
        auto_positive: bool,
    },
    /// "Which of these candidates belong to `class`?"
    Template {
        class: usize,
        template: Template,
        candidates: Vec<usize>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryBatch {
    pub id: u64,
    pub query: Query,
    /// Regularisation pairs `J_t` for the training path.
    pub reg_pairs: Vec<(usize, usize)>,
}

impl QueryBatch {
    /// Number of answers the batch expects.
    pub fn len(&self) -> usize {
        match &self.query {
            Query::Pairs { pairs, .. } => pairs.len(),
            Query::Template { candidates, .. } => candidates.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Answers known by construction, if the batch needs no labeler.
    pub fn auto_answers(&self) -> Option<AnswerSet> {
        match &self.query {
            Query::Pairs {
                pairs,
                auto_positive: true,
            } => Some(AnswerSet {
                batch_id: self.id,
                answers: vec![true; pairs.len()],
                responder: Responder::Construction,
            }),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Responder {
    Simulated,
    Human,
    Construction,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerSet {
    pub batch_id: u64,
    /// One same-class boolean per query, in batch order.
    pub answers: Vec<bool>,
    pub responder: Responder,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub new_entries: Vec<NewEntry>,
    pub conflicts: Vec<Conflict>,
}

/// Everything an oracle knows between batches.
#[derive(Debug, Clone)]
pub struct OracleState {
    pub graph: SimilarityGraph,
    pub membership: Membership,
    /// Template per class, where one exists.
    pub templates: Vec<Option<Template>>,
    pub embedding_snapshot: Option<Embedding>,
    pub queries_made: u64,
    pub seed: u64,
    /// Pair counter for the passive SSL oracle.
    pub step: u64,
    pub deducer: Deducer,
    next_batch_id: u64,
    open_batch: Option<u64>,
    rng: Rng,
}

impl OracleState {
    pub fn new(n: usize, classes: usize, seed: u64) -> Self {
        OracleState {
            graph: SimilarityGraph::new(n),
            membership: Membership::new(n, classes),
            templates: vec![None; classes],
            embedding_snapshot: None,
            queries_made: 0,
            seed,
            step: 0,
            deducer: Deducer::new(ConflictPolicy::KeepFirst),
            next_batch_id: 0,
            open_batch: None,
            rng: rng::stream(seed, rng::ORACLE),
        }
    }

    /// One outside exemplar per class, so no node starts out confirmed.
    pub fn with_exemplars(mut self, displays: Vec<Option<Vec<f64>>>) -> Self {
        self.templates = displays
            .into_iter()
            .enumerate()
            .map(|(label, display)| Some(Template::Exemplar { label, display }))
            .collect();
        self
    }

    pub fn with_policy(mut self, policy: ConflictPolicy) -> Self {
        self.deducer = Deducer::new(policy);
        self
    }

    pub fn n(&self) -> usize {
        self.graph.n()
    }

    pub fn classes(&self) -> usize {
        self.membership.classes()
    }

    pub fn rng(&mut self) -> &mut Rng {
        &mut self.rng
    }

    pub fn open_batch(&self) -> Option<u64> {
        self.open_batch
    }

    /// Use training node `index` as the template of `class`.
    pub fn set_node_template(&mut self, class: usize, index: usize) -> Result<()> {
        if class >= self.classes() {
            return Err(PalError::IndexOutOfRange {
                index: class,
                bound: self.classes(),
            });
        }
        self.membership.confirm(index, class)?;
        self.deducer
            .deduce_rows(&self.membership, &mut self.graph, &[index])?;
        self.templates[class] = Some(Template::Node { index });
        Ok(())
    }

    pub(crate) fn issue(&mut self, query: Query, reg_pairs: Vec<(usize, usize)>) -> QueryBatch {
        let id = self.next_batch_id;
        self.next_batch_id += 1;
        self.open_batch = Some(id);
        QueryBatch {
            id,
            query,
            reg_pairs,
        }
    }

    /// Fold answers for the open batch into membership and graph.
    pub fn ingest(&mut self, batch: &QueryBatch, answers: &AnswerSet) -> Result<IngestReport> {
        if self.open_batch != Some(batch.id) || answers.batch_id != batch.id {
            return Err(PalError::StaleBatch {
                expected: self.open_batch,
                got: answers.batch_id,
            });
        }
        if answers.answers.len() != batch.len() {
            return Err(PalError::AnswerCount {
                expected: batch.len(),
                found: answers.answers.len(),
            });
        }
        let mut report = IngestReport::default();
        match &batch.query {
            Query::Pairs { pairs, .. } => {
                for (&(i, j), &yes) in pairs.iter().zip(&answers.answers) {
                    let rel = if yes { Relation::Positive } else { Relation::Negative };
                    match self.graph.get(i, j) {
                        EntryState::Unknown => {
                            self.graph.set(i, j, rel.value())?;
                            report.new_entries.push(NewEntry {
                                i: i.min(j),
                                j: i.max(j),
                                relation: rel,
                            });
                        }
                        EntryState::Known(v) if Relation::of_value(v) != rel => {
                            report.conflicts.push(Conflict {
                                i: i.min(j),
                                j: i.max(j),
                                existing: v,
                                deduced: rel,
                                overwritten: false,
                            });
                        }
                        _ => {}
                    }
                }
            }
            Query::Template {
                class, candidates, ..
            } => {
                for (&i, &yes) in candidates.iter().zip(&answers.answers) {
                    if yes {
                        self.membership.confirm(i, *class)?;
                    } else {
                        self.membership.set(i, *class, Member::No)?;
                    }
                }
                let d = self
                    .deducer
                    .deduce_rows(&self.membership, &mut self.graph, candidates)?;
                report.new_entries = d.new_entries;
                report.conflicts = d.conflicts;
            }
        }
        self.queries_made += batch.len() as u64;
        self.open_batch = None;
        Ok(report)
    }

    pub fn checkpoint(&self) -> OracleCheckpoint {
        OracleCheckpoint {
            graph: self.graph.clone(),
            membership: self.membership.clone(),
            templates: self.templates.clone(),
            queries_made: self.queries_made,
            seed: self.seed,
            step: self.step,
            deducer: self.deducer.clone(),
            next_batch_id: self.next_batch_id,
            rng: RngPosition::of(&self.rng),
        }
    }

    pub fn restore(cp: OracleCheckpoint) -> Self {
        OracleState {
            graph: cp.graph,
            membership: cp.membership,
            templates: cp.templates,
            embedding_snapshot: None,
            queries_made: cp.queries_made,
            seed: cp.seed,
            step: cp.step,
            deducer: cp.deducer,
            next_batch_id: cp.next_batch_id,
            open_batch: None,
            rng: cp.rng.restore(),
        }
    }
}

/// Serializable oracle state between batches. An open batch is not kept: a
/// restored state reissues it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OracleCheckpoint {
    pub graph: SimilarityGraph,
    pub membership: Membership,
    pub templates: Vec<Option<Template>>,
    pub queries_made: u64,
    pub seed: u64,
    pub step: u64,
    pub deducer: Deducer,
    pub next_batch_id: u64,
    pub rng: RngPosition,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stale_and_short_answers_rejected() {
        let mut s = OracleState::new(4, 2, 0);
        let b = passive_supervised_oracle(&mut s, 2);
        let wrong_id = AnswerSet {
            batch_id: b.id + 1,
            answers: vec![true, true],
            responder: Responder::Simulated,
        };
        assert!(matches!(s.ingest(&b, &wrong_id), Err(PalError::StaleBatch { .. })));
        let short = AnswerSet {
            batch_id: b.id,
            answers: vec![true],
            responder: Responder::Simulated,
        };
        assert!(matches!(s.ingest(&b, &short), Err(PalError::AnswerCount { .. })));
        let ok = AnswerSet {
            batch_id: b.id,
            answers: vec![true, false],
            responder: Responder::Simulated,
        };
        s.ingest(&b, &ok).unwrap();
        assert_eq!(s.queries_made, 2);
        assert!(matches!(s.ingest(&b, &ok), Err(PalError::StaleBatch { .. })));
    }

    #[test]
    fn checkpoint_round_trip_preserves_rng() {
        let mut s = OracleState::new(6, 2, 11);
        let b = passive_supervised_oracle(&mut s, 3);
        let ans = AnswerSet {
            batch_id: b.id,
            answers: vec![true; 3],
            responder: Responder::Simulated,
        };
        s.ingest(&b, &ans).unwrap();
        let mut restored = OracleState::restore(s.checkpoint());
        let next_a = passive_supervised_oracle(&mut s, 3);
        let next_b = passive_supervised_oracle(&mut restored, 3);
        assert_eq!(next_a, next_b);
        assert_eq!(restored.graph, s.graph);
    }

    #[test]
    fn node_template_confirms_membership() {
        let mut s = OracleState::new(3, 2, 0);
        s.set_node_template(1, 2).unwrap();
        assert_eq!(s.membership.yes_class(2), Some(1));
        assert_eq!(s.templates[1], Some(Template::Node { index: 2 }));
        assert!(s.set_node_template(2, 0).is_err());
    }
}
