//! The run loop thread behind the HTTP interface.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use pal_core::oracles::{AnswerSet, HumanLabeler, Labeler, QueryBatch};
use pal_core::PalError;
use pal_harness::config::{GraphMode, RunConfig};
use pal_harness::manifest::RunManifest;
use pal_harness::run::{run_with_labeler, TrialData};
use pal_harness::{HarnessError, Result};

use crate::session::{Session, SessionObserver, Shared};

/// How long one wait on the answer queue lasts before the stop flag and the
/// overall deadline are checked again.
const POLL: Duration = Duration::from_millis(100);

/// Waits on the queue in short slices until answers arrive, the per-batch
/// deadline passes, or the run is stopped.
struct PatientLabeler {
    human: HumanLabeler,
    timeout: Duration,
    stop: Arc<AtomicBool>,
}

impl Labeler for PatientLabeler {
    fn answer(&mut self, batch: &QueryBatch) -> pal_core::Result<AnswerSet> {
        let start = Instant::now();
        loop {
            match self.human.answer(batch) {
                Err(PalError::Timeout { batch_id }) => {
                    if self.stop.load(Ordering::Relaxed) || start.elapsed() >= self.timeout {
                        return Err(PalError::Timeout { batch_id });
                    }
                }
                other => return other,
            }
        }
    }
}

/// A run being driven by answers from outside.
pub struct RunHandle {
    pub shared: Shared,
    stop: Arc<AtomicBool>,
    thread: JoinHandle<Result<RunManifest>>,
}

impl RunHandle {
    pub fn is_finished(&self) -> bool {
        self.thread.is_finished()
    }

    /// Ask the loop to give up at its next wait, then collect the result.
    pub fn stop(self) -> Result<RunManifest> {
        self.stop.store(true, Ordering::Relaxed);
        self.join()
    }

    pub fn join(self) -> Result<RunManifest> {
        self.thread
            .join()
            .unwrap_or_else(|_| Err(HarnessError::config("run loop panicked")))
    }
}

/// Check that `config` can be answered by a person: one trial, an active
/// oracle, no simulated noise.
pub fn validate(config: &RunConfig) -> Result<RunConfig> {
    let cfg = config.resolve()?;
    if cfg.graph.mode != GraphMode::Oracle {
        return Err(HarnessError::config("serving needs graph.mode \"oracle\""));
    }
    if cfg.trials != 1 {
        return Err(HarnessError::config("serving runs a single trial; set trials to 1"));
    }
    if cfg.oracle.noise.p > 0.0 {
        return Err(HarnessError::config("label noise applies to simulated labelers only"));
    }
    Ok(cfg)
}

/// Validate `config` and start its run on a new thread.
pub fn start(config: &RunConfig, run_id: String) -> Result<RunHandle> {
    let cfg = validate(config)?;
    let seed = pal_core::rng::trial_seed(cfg.seed, 0);
    let data = TrialData::generate(&cfg, seed)?;
    let x: Vec<Vec<f64>> = data
        .train
        .x
        .row_iter()
        .map(|r| r.iter().copied().collect())
        .collect();
    let shared = Shared::new();
    *shared.write() = Some(Session::new(run_id, x.len(), cfg.dataset.classes));
    let stop = Arc::new(AtomicBool::new(false));
    let mut labeler = PatientLabeler {
        human: HumanLabeler::new(shared.queue.clone(), POLL),
        timeout: Duration::from_secs(cfg.oracle.timeout_secs),
        stop: stop.clone(),
    };
    let mut observer = SessionObserver::new(shared.clone(), x);
    let loop_shared = shared.clone();
    let thread = thread::Builder::new()
        .name("pal-run".into())
        .spawn(move || {
            let result = run_with_labeler(&cfg, &mut labeler, &mut observer);
            match &result {
                Ok(m) => loop_shared.finish(Some(m.clone()), None),
                Err(e) => {
                    log::error!("run loop stopped: {e}");
                    loop_shared.finish(None, Some(e.to_string()));
                }
            }
            result
        })
        .map_err(|e| HarnessError::config(format!("cannot start run loop: {e}")))?;
    Ok(RunHandle { shared, stop, thread })
}
