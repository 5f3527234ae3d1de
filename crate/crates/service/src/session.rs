//! Snapshot of a served run, and the observer that keeps it current.

use std::sync::{Arc, RwLock, RwLockReadGuard, RwLockWriteGuard};

use pal_core::graph::connected_components;
use pal_core::oracles::{AnswerQueue, OracleState, Query, QueryBatch, Template};
use pal_core::probe::ProbeError;
use pal_harness::manifest::RunManifest;
use pal_harness::run::{CheckpointView, TrialObserver};
use serde::Serialize;

pub const API_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Lifecycle {
    AwaitingAnswers,
    Solving,
    Done,
}

/// A training point as shown to the labeler.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointView {
    pub index: usize,
    pub coords: Vec<f64>,
    /// Opaque per-sample payload such as an image URI. Always null for the
    /// synthetic generators.
    pub payload: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TemplateView {
    /// Training node used as the template; null for an outside exemplar.
    pub index: Option<usize>,
    pub coords: Option<Vec<f64>>,
    pub payload: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CandidateView {
    #[serde(flatten)]
    pub point: PointView,
    /// Second member of a pair question.
    pub partner: Option<PointView>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BatchKind {
    /// Select the candidates that share the template's class.
    Template,
    /// Select the pairs whose two points share a class.
    Pairs,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatchView {
    pub batch_id: u64,
    pub kind: BatchKind,
    pub template_class: Option<usize>,
    pub template: Option<TemplateView>,
    pub candidates: Vec<CandidateView>,
}

impl BatchView {
    pub fn new(batch: &QueryBatch, coords: &dyn Fn(usize) -> Vec<f64>) -> Self {
        let point = |index| PointView {
            index,
            coords: coords(index),
            payload: None,
        };
        match &batch.query {
            Query::Template {
                class,
                template,
                candidates,
            } => BatchView {
                batch_id: batch.id,
                kind: BatchKind::Template,
                template_class: Some(*class),
                template: Some(match template {
                    Template::Node { index } => TemplateView {
                        index: Some(*index),
                        coords: Some(coords(*index)),
                        payload: None,
                    },
                    Template::Exemplar { display, .. } => TemplateView {
                        index: None,
                        coords: display.clone(),
                        payload: None,
                    },
                }),
                candidates: candidates
                    .iter()
                    .map(|&i| CandidateView {
                        point: point(i),
                        partner: None,
                    })
                    .collect(),
            },
            Query::Pairs { pairs, .. } => BatchView {
                batch_id: batch.id,
                kind: BatchKind::Pairs,
                template_class: None,
                template: None,
                candidates: pairs
                    .iter()
                    .map(|&(a, b)| CandidateView {
                        point: point(a),
                        partner: Some(point(b)),
                    })
                    .collect(),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metrics {
    pub checkpoint: u64,
    pub train: ProbeError,
    pub test: ProbeError,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Progress {
    /// Answers given by the labeler.
    pub queries_answered: u64,
    /// Queries issued, including those answered by construction.
    pub queries_made: u64,
    pub known_entry_fraction: f64,
    pub component_count: usize,
    pub latest: Option<Metrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmbeddedPoint {
    pub index: usize,
    pub coords: Vec<f64>,
    /// First two embedding coordinates, zero-padded.
    pub embedding: [f64; 2],
    pub component: usize,
    pub deduced_class: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmbeddingView {
    pub checkpoint: u64,
    pub points: Vec<EmbeddedPoint>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    pub run_id: String,
    pub lifecycle: Lifecycle,
    pub classes: usize,
    pub n: usize,
    /// The open batch while awaiting answers, otherwise the last one served.
    pub batch: Option<BatchView>,
    pub progress: Progress,
    pub embedding: Option<EmbeddingView>,
    pub manifest: Option<RunManifest>,
    pub error: Option<String>,
}

impl Session {
    pub fn new(run_id: String, n: usize, classes: usize) -> Self {
        Session {
            run_id,
            lifecycle: Lifecycle::Solving,
            classes,
            n,
            batch: None,
            progress: Progress::default(),
            embedding: None,
            manifest: None,
            error: None,
        }
    }

    pub fn open_batch(&self) -> Option<&BatchView> {
        match self.lifecycle {
            Lifecycle::AwaitingAnswers => self.batch.as_ref(),
            _ => None,
        }
    }
}

/// Shared handle: many readers, one writer (the run loop), plus the fenced
/// queue that carries answers back to it.
#[derive(Debug, Clone, Default)]
pub struct Shared {
    session: Arc<RwLock<Option<Session>>>,
    pub queue: Arc<AnswerQueue>,
}

impl Shared {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn read(&self) -> RwLockReadGuard<'_, Option<Session>> {
        self.session.read().unwrap_or_else(|e| e.into_inner())
    }

    pub fn write(&self) -> RwLockWriteGuard<'_, Option<Session>> {
        self.session.write().unwrap_or_else(|e| e.into_inner())
    }

    fn update(&self, f: impl FnOnce(&mut Session)) {
        if let Some(s) = self.write().as_mut() {
            f(s);
        }
    }

    pub fn finish(&self, manifest: Option<RunManifest>, error: Option<String>) {
        self.update(|s| {
            if let Some(m) = &manifest {
                if let Some(r) = m.trials.first().and_then(|t| t.checkpoints.last()) {
                    s.progress.latest = Some(Metrics {
                        checkpoint: r.checkpoint,
                        train: r.train,
                        test: r.test,
                    });
                }
            }
            s.lifecycle = Lifecycle::Done;
            s.manifest = manifest;
            s.error = error;
        });
    }
}

/// Publishes each labeler batch to the queue and mirrors the run's progress
/// into the session.
pub struct SessionObserver {
    shared: Shared,
    x: Vec<Vec<f64>>,
}

impl SessionObserver {
    pub fn new(shared: Shared, x: Vec<Vec<f64>>) -> Self {
        SessionObserver { shared, x }
    }
}

impl TrialObserver for SessionObserver {
    fn batch_opened(&mut self, batch: &QueryBatch, state: &OracleState) {
        if batch.auto_answers().is_some() {
            return;
        }
        let view = BatchView::new(batch, &|i| self.x[i].clone());
        let mut guard = self.shared.write();
        if let Some(s) = guard.as_mut() {
            s.batch = Some(view);
            s.progress.queries_made = state.queries_made;
            s.lifecycle = Lifecycle::AwaitingAnswers;
        }
        // Published under the session lock so a handler never sees an open
        // batch the queue does not know about.
        self.shared.queue.publish(batch.clone());
    }

    fn answered(&mut self, batch: &QueryBatch, state: &OracleState) {
        let human = batch.auto_answers().is_none();
        let components = connected_components(&state.graph).count;
        self.shared.update(|s| {
            if human {
                s.progress.queries_answered += batch.len() as u64;
            }
            s.progress.queries_made = state.queries_made;
            s.progress.known_entry_fraction = state.graph.known_entry_fraction();
            s.progress.component_count = components;
            s.lifecycle = Lifecycle::Solving;
        });
    }

    fn checkpoint(&mut self, view: &CheckpointView<'_>) {
        let r = view.record;
        let z = view.embedding;
        let points = (0..z.nrows())
            .map(|i| EmbeddedPoint {
                index: i,
                coords: self.x[i].clone(),
                embedding: [
                    if z.ncols() > 0 { z[(i, 0)] } else { 0.0 },
                    if z.ncols() > 1 { z[(i, 1)] } else { 0.0 },
                ],
                component: view.components.assignment[i],
                deduced_class: view.state.and_then(|st| st.membership.yes_class(i)),
            })
            .collect();
        self.shared.update(|s| {
            s.progress.queries_made = r.queries_made;
            s.progress.known_entry_fraction = r.known_entry_fraction;
            s.progress.component_count = r.component_count;
            s.progress.latest = Some(Metrics {
                checkpoint: r.checkpoint,
                train: r.train,
                test: r.test,
            });
            s.embedding = Some(EmbeddingView {
                checkpoint: r.checkpoint,
                points,
            });
        });
    }
}
