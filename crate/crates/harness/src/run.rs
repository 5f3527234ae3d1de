//! The query, ingest, solve, probe loop.

use std::sync::Arc;
use std::time::Instant;

use nalgebra::DMatrix;
use pal_core::datasets::{
    augment, concentric_circles, concentric_circles_test, gaussian_mixture, gaussian_mixture_test, reveal_labels,
    LabeledDataset,
};
use pal_core::graph::{
    build_partial_sup_graph, build_ssl_graph, build_sup_graph, connected_components, mix_graphs,
    AugmentationLayout, Components,
};
use pal_core::kernel::{evaluate_embedding, solve_embedding};
use pal_core::oracles::{
    nnclr_oracle, passive_ssl_oracle, passive_supervised_oracle, CaptchaOracle, ConfidenceSampler, Labeler,
    NoisyLabeler, OracleState, PruningSampler, QueryBatch, Responder, SimulatedLabeler,
};
use pal_core::probe::{fit_linear_probe, probe_error, score_error, ProbeError};
use pal_core::rng::{self, trial_seed, Rng};
use pal_core::sgd::{FeatureMap, KnownPairs, PairSampler, Schedule, SgdTrainer, UniformPairs};
use pal_core::{Embedding, LabelMatrix, PalError, SimilarityGraph};
use rand::seq::index::sample;

use crate::config::{Decay, Generator, GraphMode, OracleKind, PairSampling, ProbeLabels, RunConfig, SamplerKind, SolverKind};
use crate::error::{is_solver_error, HarnessError, Result};
use crate::manifest::{CheckpointRecord, RunManifest, TrialRecord, TrialStatus};

type CoreResult<T> = pal_core::Result<T>;

/// Everything a trial draws before its first query.
#[derive(Debug, Clone)]
pub struct TrialData {
    /// Training nodes after augmentation and label reveal.
    pub train: LabeledDataset,
    pub test: LabeledDataset,
    /// Present when samples were augmented into several views.
    pub layout: Option<AugmentationLayout>,
    /// Display coordinates of each class's outside exemplar.
    pub exemplars: Vec<Option<Vec<f64>>>,
}

impl TrialData {
    pub fn generate(config: &RunConfig, seed: u64) -> Result<TrialData> {
        let d = &config.dataset;
        let (base, test) = match d.generator {
            Generator::Circles => (
                concentric_circles(d.n, d.classes, d.noise, seed)?,
                concentric_circles_test(d.test_size, d.classes, d.noise, seed)?,
            ),
            Generator::Gaussian => (
                gaussian_mixture(d.n, d.classes, d.noise, seed)?,
                gaussian_mixture_test(d.test_size, d.classes, d.noise, seed)?,
            ),
        };
        let (train, layout) = if d.views * d.epochs > 1 {
            let (train, layout) = augment(&base, d.views, d.epochs, d.aug_std, seed)?;
            (train, Some(layout))
        } else {
            (base, None)
        };
        let train = if d.revealed > 0 {
            reveal_labels(&train, d.revealed, seed)?
        } else {
            train
        };
        Ok(TrialData {
            exemplars: exemplars(d.generator, d.classes),
            train,
            test,
            layout,
        })
    }
}

/// A noiseless point at the centre of each class: on the positive x axis at
/// the class radius for circles, the class mean for the mixture.
pub fn exemplars(generator: Generator, classes: usize) -> Vec<Option<Vec<f64>>> {
    (0..classes)
        .map(|c| {
            Some(match generator {
                Generator::Circles => vec![(c + 1) as f64 / classes as f64, 0.0],
                Generator::Gaussian => (0..classes).map(|d| if d == c { 1.0 } else { 0.0 }).collect(),
            })
        })
        .collect()
}

/// Truthful labeler over the trial's hidden labels, wrapped in the
/// configured noise.
pub fn simulated_labeler(config: &RunConfig, data: &TrialData, seed: u64) -> Result<NoisyLabeler<SimulatedLabeler>> {
    let inner = SimulatedLabeler::with_classes(data.train.hidden_labels.clone(), config.dataset.classes)?;
    let noise = config.oracle.noise;
    Ok(NoisyLabeler::new(inner, noise.p, noise.mode, seed)?)
}

/// What a run loop exposes while it works.
pub struct CheckpointView<'a> {
    pub record: &'a CheckpointRecord,
    pub x: &'a DMatrix<f64>,
    pub embedding: &'a DMatrix<f64>,
    pub components: &'a Components,
    pub state: Option<&'a OracleState>,
}

pub trait TrialObserver {
    fn batch_opened(&mut self, _batch: &QueryBatch, _state: &OracleState) {}
    fn answered(&mut self, _batch: &QueryBatch, _state: &OracleState) {}
    fn checkpoint(&mut self, _view: &CheckpointView<'_>) {}
}

#[derive(Debug, Default, Clone, Copy)]
pub struct NoObserver;

impl TrialObserver for NoObserver {}

enum Solver {
    ClosedForm,
    Sgd(Box<SgdState>),
}

struct SgdState {
    trainer: SgdTrainer,
    phi: DMatrix<f64>,
    phi_test: DMatrix<f64>,
    sampler: Box<dyn PairSampler + Send>,
    rng: Rng,
    steps: usize,
}

struct Embedded {
    z: DMatrix<f64>,
    z_test: DMatrix<f64>,
    eigengap: Option<f64>,
    clipped: usize,
}

impl Solver {
    fn new(config: &RunConfig, data: &TrialData, seed: u64) -> CoreResult<Solver> {
        if config.solver.kind == SolverKind::ClosedForm {
            return Ok(Solver::ClosedForm);
        }
        let s = &config.solver.sgd;
        let k = &config.solver.kernel;
        let fm = FeatureMap::random_fourier(
            data.train.dim(),
            s.features,
            k.bandwidth,
            &mut rng::stream(seed, rng::FEATURES),
        )?;
        let rate = s.rate / s.batch as f64;
        let horizon = s.steps * config.schedule().len().max(1);
        let schedule = match s.decay {
            Decay::Constant => Schedule::Constant { rate },
            Decay::Linear => Schedule::LinearDecay { rate, horizon },
            Decay::InverseSqrt => Schedule::InverseSqrt { rate },
        };
        let trainer = SgdTrainer::new(
            s.features,
            k.embed_dim,
            s.init_scale,
            schedule,
            &mut rng::stream(seed, rng::SGD_INIT),
        );
        let sampler: Box<dyn PairSampler + Send> = match s.pairs {
            PairSampling::Uniform => Box::new(UniformPairs {
                n: data.train.n(),
                batch: s.batch,
            }),
            PairSampling::Known => Box::new(KnownPairs::new(s.batch)),
        };
        Ok(Solver::Sgd(Box::new(SgdState {
            trainer,
            phi: fm.transform(&data.train.x)?,
            phi_test: fm.transform(&data.test.x)?,
            sampler,
            rng: rng::stream(seed, rng::SGD_PAIRS),
            steps: s.steps,
        })))
    }

    fn embed(&mut self, config: &RunConfig, data: &TrialData, g: &SimilarityGraph) -> CoreResult<Embedded> {
        match self {
            Solver::ClosedForm => {
                let model = solve_embedding(g, &data.train.x, &config.solver.kernel)?;
                let z_test = evaluate_embedding(&model, &data.test.x)?;
                Ok(Embedded {
                    eigengap: model.eigengap(),
                    clipped: model.clipped,
                    z: model.embedding.into_matrix(),
                    z_test,
                })
            }
            Solver::Sgd(s) => {
                let s = s.as_mut();
                s.trainer.train(g, &s.phi, s.steps, s.sampler.as_mut(), &mut s.rng)?;
                Ok(Embedded {
                    z: &s.phi * &s.trainer.theta,
                    z_test: &s.phi_test * &s.trainer.theta,
                    eigengap: None,
                    clipped: 0,
                })
            }
        }
    }
}

struct Trial<'a> {
    config: &'a RunConfig,
    data: &'a TrialData,
    solver: Solver,
    /// Labels the graph and the labeler see, corruption included.
    graph_labels: Vec<usize>,
    clean: LabelMatrix,
}

struct Evaluation {
    record: CheckpointRecord,
    z: DMatrix<f64>,
    components: Components,
}

impl Trial<'_> {
    fn probe_labels(&self, state: Option<&OracleState>) -> CoreResult<Option<(Vec<usize>, LabelMatrix)>> {
        let classes = self.config.dataset.classes;
        match self.config.probe.labels {
            ProbeLabels::Hidden => Ok(Some(((0..self.data.train.n()).collect(), self.clean.clone()))),
            ProbeLabels::Deduced => {
                let rows: Vec<(usize, usize)> = (0..self.data.train.n())
                    .filter_map(|i| {
                        let deduced = state.and_then(|s| s.membership.yes_class(i));
                        let revealed = self.data.train.revealed[i].then(|| self.graph_labels[i]);
                        deduced.or(revealed).map(|c| (i, c))
                    })
                    .collect();
                if rows.is_empty() {
                    return Ok(None);
                }
                let labels: Vec<Option<usize>> = rows.iter().map(|&(_, c)| Some(c)).collect();
                Ok(Some((rows.iter().map(|&(i, _)| i).collect(), LabelMatrix::new(classes, labels)?)))
            }
        }
    }

    fn evaluate(&mut self, g: &SimilarityGraph, state: Option<&OracleState>, checkpoint: u64) -> CoreResult<Evaluation> {
        let start = Instant::now();
        let solve_graph = if self.config.graph.contrastive {
            g.to_contrastive()
        } else {
            g.clone()
        };
        let e = self.solver.embed(self.config, self.data, &solve_graph)?;
        let classes = self.config.dataset.classes;
        let test_labels = self.data.test.labels();
        let (train, test) = match self.probe_labels(state)? {
            Some((rows, labels)) => {
                let z_fit = Embedding::new(e.z.select_rows(&rows))?;
                let probe = fit_linear_probe(&z_fit, &labels, self.config.probe.ridge)?;
                (
                    probe_error(&probe, &e.z, &self.clean)?,
                    probe_error(&probe, &e.z_test, &test_labels)?,
                )
            }
            None => (
                score_error(&DMatrix::zeros(e.z.nrows(), classes), &self.data.train.hidden_labels)?,
                score_error(&DMatrix::zeros(e.z_test.nrows(), classes), &self.data.test.hidden_labels)?,
            ),
        };
        check_finite(&train)?;
        check_finite(&test)?;
        let components = connected_components(g);
        let record = CheckpointRecord {
            checkpoint,
            queries_made: state.map_or(0, |s| s.queries_made),
            answers_used: 0,
            known_entry_fraction: g.known_entry_fraction(),
            component_count: components.count,
            train,
            test,
            eigengap: e.eigengap,
            clipped: e.clipped,
            carried: false,
            wall_time_ms: start.elapsed().as_secs_f64() * 1e3,
        };
        Ok(Evaluation {
            record,
            z: e.z,
            components,
        })
    }
}

fn check_finite(e: &ProbeError) -> CoreResult<()> {
    if e.mse.is_finite() && e.zero_one.is_finite() {
        Ok(())
    } else {
        Err(PalError::NonFinite("probe error"))
    }
}

/// The graph used when no oracle runs.
pub fn fixed_graph(config: &RunConfig, data: &TrialData, graph_labels: &[usize], seed: u64) -> Result<SimilarityGraph> {
    let classes = config.dataset.classes;
    let revealed = || LabelMatrix::masked(graph_labels, classes, &data.train.revealed);
    let ssl = || match &data.layout {
        Some(layout) => Ok(build_ssl_graph(layout)?),
        None => Err(HarnessError::config("the SSL graph needs views >= 2")),
    };
    let mut g = match config.graph.mode {
        GraphMode::Supervised => build_sup_graph(&LabelMatrix::from_labels(graph_labels, classes)?)?,
        GraphMode::Ssl => ssl()?,
        GraphMode::Partial => build_partial_sup_graph(&revealed()?),
        GraphMode::Mixed => mix_graphs(&ssl()?, &revealed()?, config.graph.alpha)?,
        GraphMode::Oracle => return Err(HarnessError::config("oracle mode has no fixed graph")),
    };
    let f = config.graph.missing_fraction;
    if f > 0.0 {
        forget_entries(&mut g, f, &mut rng::stream(seed, rng::MISSING))?;
    }
    Ok(g)
}

/// Forget `round(fraction * stored)` stored entries chosen uniformly.
pub fn forget_entries(g: &mut SimilarityGraph, fraction: f64, rng: &mut Rng) -> Result<usize> {
    let stored: Vec<(usize, usize)> = g.known().map(|(i, j, _)| (i, j)).collect();
    let count = (fraction * stored.len() as f64).round() as usize;
    for k in sample(rng, stored.len(), count.min(stored.len())) {
        let (i, j) = stored[k];
        g.forget(i, j)?;
    }
    Ok(count)
}

enum NextBatch {
    Captcha(CaptchaOracle),
    PassiveSupervised(usize),
    PassiveSsl(usize),
    Nnclr(usize),
}

impl NextBatch {
    fn new(config: &RunConfig) -> NextBatch {
        let o = &config.oracle;
        let captcha = || {
            let c = CaptchaOracle::new(o.batch_size);
            match &o.prior {
                Some(p) => c.with_prior(p.clone()),
                None => c,
            }
        };
        match o.kind() {
            OracleKind::Captcha => NextBatch::Captcha(match o.sampler {
                SamplerKind::Uniform => captcha(),
                SamplerKind::Confidence => captcha().with_sampler(Arc::new(ConfidenceSampler::default())),
            }),
            OracleKind::Pruning => NextBatch::Captcha(captcha().with_sampler(Arc::new(PruningSampler {
                k: o.pruning_k.unwrap_or(config.dataset.classes),
                threshold: o.pruning_threshold,
            }))),
            OracleKind::PassiveSupervised => NextBatch::PassiveSupervised(o.batch_size),
            OracleKind::PassiveSsl => NextBatch::PassiveSsl(o.reg_pairs),
            OracleKind::Nnclr => NextBatch::Nnclr(o.batch_size),
            OracleKind::Off => unreachable!("resolved configs with an oracle only"),
        }
    }

    fn needs_snapshot(&self, config: &RunConfig) -> bool {
        match self {
            NextBatch::Nnclr(_) => true,
            NextBatch::Captcha(_) => {
                config.oracle.kind() == OracleKind::Pruning || config.oracle.sampler == SamplerKind::Confidence
            }
            _ => false,
        }
    }

    /// Uniform captcha batch, used when the pruning sampler cannot cluster
    /// the current embedding.
    fn uniform_fallback(&self, state: &mut OracleState, limit: usize) -> CoreResult<QueryBatch> {
        match self {
            NextBatch::Captcha(c) => {
                let plain = CaptchaOracle::new(c.batch_size);
                let plain = match &c.prior {
                    Some(p) => plain.with_prior(p.clone()),
                    None => plain,
                };
                plain.next_limited(state, limit)
            }
            _ => Err(PalError::DegenerateClustering),
        }
    }

    fn next(&self, state: &mut OracleState, layout: Option<&AugmentationLayout>, limit: usize) -> CoreResult<QueryBatch> {
        match self {
            NextBatch::Captcha(c) => c.next_limited(state, limit),
            NextBatch::PassiveSupervised(b) => Ok(passive_supervised_oracle(state, (*b).min(limit))),
            NextBatch::PassiveSsl(reg) => {
                let layout = layout.ok_or_else(|| PalError::InvalidArgument("passive SSL needs views >= 2".into()))?;
                passive_ssl_oracle(state, layout, *reg)
            }
            NextBatch::Nnclr(b) => {
                let n = state.n();
                let m = (*b).min(limit).max(2).min(n);
                let minibatch = sample(state.rng(), n, m).into_vec();
                nnclr_oracle(state, &minibatch)
            }
        }
    }
}

/// Outcome of the loop body, before solver failures are folded into the record.
enum Abort {
    Solver(PalError),
    Run(HarnessError),
}

impl From<PalError> for Abort {
    fn from(e: PalError) -> Self {
        match e {
            PalError::Timeout { batch_id } => Abort::Run(HarnessError::Timeout { batch_id }),
            e if is_solver_error(&e) => Abort::Solver(e),
            e => Abort::Run(HarnessError::Core(e)),
        }
    }
}

/// Run one trial against `labeler`.
///
/// Solver failures mark the trial failed; oracle timeouts and invalid input
/// abort the run.
pub fn run_trial(
    config: &RunConfig,
    trial: usize,
    seed: u64,
    data: &TrialData,
    labeler: &mut dyn Labeler,
    observer: &mut dyn TrialObserver,
) -> Result<TrialRecord> {
    let clean = data.train.labels();
    let graph_labels = labeler
        .hidden_labels_mut()
        .map(|(l, _)| l.to_vec())
        .unwrap_or_else(|| data.train.hidden_labels.clone());
    let corrupted_labels = graph_labels
        .iter()
        .zip(&data.train.hidden_labels)
        .filter(|(a, b)| a != b)
        .count();
    let mut record = TrialRecord {
        trial,
        seed,
        status: TrialStatus::Completed,
        checkpoints: Vec::new(),
        exhausted_at: None,
        corrupted_labels,
        conflicts: 0,
        warnings: Vec::new(),
    };
    let solver = Solver::new(config, data, seed).map_err(HarnessError::from)?;
    let mut t = Trial {
        config,
        data,
        solver,
        graph_labels,
        clean,
    };
    let outcome = if config.oracle.kind() == OracleKind::Off {
        fixed_loop(&mut t, seed, &mut record, observer)
    } else {
        oracle_loop(&mut t, seed, labeler, &mut record, observer)
    };
    match outcome {
        Ok(()) => Ok(record),
        Err(Abort::Solver(e)) => {
            record.status = TrialStatus::Failed { error: e.to_string() };
            Ok(record)
        }
        Err(Abort::Run(e)) => Err(e),
    }
}

fn fixed_loop(
    t: &mut Trial<'_>,
    seed: u64,
    record: &mut TrialRecord,
    observer: &mut dyn TrialObserver,
) -> std::result::Result<(), Abort> {
    let g = fixed_graph(t.config, t.data, &t.graph_labels, seed).map_err(Abort::Run)?;
    for &c in t.config.schedule() {
        let e = t.evaluate(&g, None, c)?;
        observer.checkpoint(&CheckpointView {
            record: &e.record,
            x: &t.data.train.x,
            embedding: &e.z,
            components: &e.components,
            state: None,
        });
        record.checkpoints.push(e.record);
    }
    Ok(())
}

fn checkpoint(
    t: &mut Trial<'_>,
    state: &mut OracleState,
    c: u64,
    answers_used: u64,
    observer: &mut dyn TrialObserver,
) -> std::result::Result<CheckpointRecord, Abort> {
    let mut e = t.evaluate(&state.graph, Some(state), c)?;
    e.record.answers_used = answers_used;
    observer.checkpoint(&CheckpointView {
        record: &e.record,
        x: &t.data.train.x,
        embedding: &e.z,
        components: &e.components,
        state: Some(state),
    });
    state.embedding_snapshot = Some(Embedding::new(e.z)?);
    Ok(e.record)
}

fn oracle_loop(
    t: &mut Trial<'_>,
    seed: u64,
    labeler: &mut dyn Labeler,
    record: &mut TrialRecord,
    observer: &mut dyn TrialObserver,
) -> std::result::Result<(), Abort> {
    let config = t.config;
    let schedule = config.schedule();
    let mut state = OracleState::new(t.data.train.n(), config.dataset.classes, seed).with_exemplars(t.data.exemplars.clone());
    let oracle = NextBatch::new(config);
    let mut answers_used = 0u64;
    let mut fallbacks = 0usize;
    let mut next = 0;

    loop {
        while next < schedule.len() && state.queries_made >= schedule[next] {
            let r = checkpoint(t, &mut state, schedule[next], answers_used, observer)?;
            record.checkpoints.push(r);
            next += 1;
        }
        if next == schedule.len() {
            note_fallbacks(record, fallbacks);
            return Ok(());
        }
        if state.embedding_snapshot.is_none() && oracle.needs_snapshot(config) {
            let e = t.solver.embed(config, t.data, &state.graph)?;
            state.embedding_snapshot = Some(Embedding::new(e.z)?);
        }
        let limit = (schedule[next] - state.queries_made) as usize;
        let batch = match oracle.next(&mut state, t.data.layout.as_ref(), limit) {
            Ok(b) => b,
            Err(PalError::Exhausted) => break,
            Err(PalError::DegenerateClustering) => {
                fallbacks += 1;
                match oracle.uniform_fallback(&mut state, limit) {
                    Ok(b) => b,
                    Err(PalError::Exhausted) => break,
                    Err(e) => return Err(e.into()),
                }
            }
            Err(e) => return Err(e.into()),
        };
        observer.batch_opened(&batch, &state);
        let answers = match batch.auto_answers() {
            Some(a) => a,
            None => labeler.answer(&batch)?,
        };
        if answers.responder != Responder::Construction {
            answers_used += answers.answers.len() as u64;
        }
        let report = state.ingest(&batch, &answers)?;
        record.conflicts += report.conflicts.len();
        observer.answered(&batch, &state);
    }

    note_fallbacks(record, fallbacks);
    // The oracle ran dry: evaluate the final graph once and carry it forward.
    record.exhausted_at = Some(state.queries_made);
    record.warnings.push(format!(
        "oracle exhausted after {} queries; checkpoints from {} onward repeat the final graph's metrics",
        state.queries_made, schedule[next]
    ));
    let last = checkpoint(t, &mut state, schedule[next], answers_used, observer)?;
    record.checkpoints.push(last.clone());
    for &c in &schedule[next + 1..] {
        record.checkpoints.push(CheckpointRecord {
            checkpoint: c,
            carried: true,
            wall_time_ms: 0.0,
            ..last.clone()
        });
    }
    Ok(())
}

fn note_fallbacks(record: &mut TrialRecord, fallbacks: usize) {
    if fallbacks > 0 {
        record.warnings.push(format!(
            "{fallbacks} pruning batches fell back to uniform sampling on a degenerate embedding"
        ));
    }
}

fn trial_seeds(config: &RunConfig) -> Vec<u64> {
    (0..config.trials as u64).map(|t| trial_seed(config.seed, t)).collect()
}

/// Resolve `config`, run every trial with simulated labelers and aggregate.
///
/// A run whose trials all failed still returns its manifest; see
/// [`RunManifest::failed_trials`] and [`ensure_success`].
pub fn run_pal(config: &RunConfig) -> Result<RunManifest> {
    let start = Instant::now();
    let cfg = config.resolve()?;
    let seeds = trial_seeds(&cfg);
    let results = cfg.execution.map(cfg.trials, |t| -> Result<TrialRecord> {
        let data = TrialData::generate(&cfg, seeds[t])?;
        let mut labeler = simulated_labeler(&cfg, &data, seeds[t])?;
        run_trial(&cfg, t, seeds[t], &data, &mut labeler, &mut NoObserver)
    });
    let trials = results.into_iter().collect::<Result<Vec<_>>>()?;
    let threads = cfg.execution.threads();
    let mut m = RunManifest::new(cfg, seeds, threads, trials);
    m.wall_time_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(m)
}

/// Single-trial run against an external labeler, such as a human behind the
/// answer queue. Label noise is not applied.
pub fn run_with_labeler(
    config: &RunConfig,
    labeler: &mut dyn Labeler,
    observer: &mut dyn TrialObserver,
) -> Result<RunManifest> {
    let start = Instant::now();
    let cfg = config.resolve()?;
    if cfg.trials != 1 {
        return Err(HarnessError::config("an external labeler answers a single trial; set trials to 1"));
    }
    if cfg.oracle.noise.p > 0.0 {
        return Err(HarnessError::config("label noise applies to simulated labelers only"));
    }
    let seeds = trial_seeds(&cfg);
    let data = TrialData::generate(&cfg, seeds[0])?;
    let record = run_trial(&cfg, 0, seeds[0], &data, labeler, observer)?;
    let threads = cfg.execution.threads();
    let mut m = RunManifest::new(cfg, seeds, threads, vec![record]);
    m.wall_time_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(m)
}

/// Error when no trial completed.
pub fn ensure_success(m: &RunManifest) -> Result<()> {
    if !m.trials.is_empty() && m.failed_trials == m.trials.len() {
        let first = match &m.trials[0].status {
            TrialStatus::Failed { error } => error.clone(),
            TrialStatus::Completed => String::new(),
        };
        return Err(HarnessError::AllTrialsFailed {
            trials: m.trials.len(),
            first,
        });
    }
    Ok(())
}
