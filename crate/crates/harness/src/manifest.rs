use pal_core::probe::ProbeError;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::stats::{mean, sample_std};

pub const MANIFEST_VERSION: u32 = 1;

/// Metrics after one checkpoint of one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointRecord {
    /// Scheduled query count.
    pub checkpoint: u64,
    /// Queries actually issued; can exceed `checkpoint` when a batch cannot
    /// be split.
    pub queries_made: u64,
    /// Answers that came from the labeler rather than by construction.
    pub answers_used: u64,
    pub known_entry_fraction: f64,
    pub component_count: usize,
    pub train: ProbeError,
    pub test: ProbeError,
    /// `lambda_K - lambda_{K+1}` of the spectral operator (closed form only).
    pub eigengap: Option<f64>,
    /// Kept embedding columns with a non-positive eigenvalue.
    pub clipped: usize,
    /// Copied from the previous checkpoint after the oracle ran dry.
    pub carried: bool,
    pub wall_time_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum TrialStatus {
    Completed,
    Failed { error: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    #[serde(flatten)]
    pub status: TrialStatus,
    pub checkpoints: Vec<CheckpointRecord>,
    /// Query count at which the oracle had nothing left to ask.
    pub exhausted_at: Option<u64>,
    /// Training labels reassigned by label corruption.
    pub corrupted_labels: usize,
    /// Answers that contradicted what was already known.
    pub conflicts: usize,
    pub warnings: Vec<String>,
}

impl TrialRecord {
    pub fn is_completed(&self) -> bool {
        self.status == TrialStatus::Completed
    }
}

/// Mean and sample standard deviation across completed trials at one
/// checkpoint. Standard deviations are absent with fewer than two trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub queries: u64,
    pub trials: usize,
    pub mean_mse: Option<f64>,
    pub std_mse: Option<f64>,
    pub mean_zero_one: Option<f64>,
    pub std_zero_one: Option<f64>,
    pub mean_components: Option<f64>,
    pub mean_train_mse: Option<f64>,
    pub mean_train_zero_one: Option<f64>,
    pub mean_known_fraction: Option<f64>,
    pub mean_answers: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: u32,
    pub software_version: String,
    pub config: RunConfig,
    pub seed: u64,
    pub trial_seeds: Vec<u64>,
    pub threads: usize,
    pub notes: Vec<String>,
    pub trials: Vec<TrialRecord>,
    pub failed_trials: usize,
    pub aggregate: Vec<AggregateRow>,
    pub warnings: Vec<String>,
    pub wall_time_ms: f64,
}

impl RunManifest {
    pub fn new(config: RunConfig, trial_seeds: Vec<u64>, threads: usize, trials: Vec<TrialRecord>) -> Self {
        let failed_trials = trials.iter().filter(|t| !t.is_completed()).count();
        let aggregate = aggregate(config.schedule(), &trials);
        let mut warnings = Vec::new();
        if failed_trials > 0 {
            warnings.push(format!(
                "{failed_trials} of {} trials failed and are excluded from the aggregate",
                trials.len()
            ));
        }
        for t in &trials {
            warnings.extend(t.warnings.iter().map(|w| format!("trial {}: {w}", t.trial)));
        }
        RunManifest {
            version: MANIFEST_VERSION,
            software_version: env!("CARGO_PKG_VERSION").to_string(),
            seed: config.seed,
            notes: notes(&config),
            config,
            trial_seeds,
            threads,
            trials,
            failed_trials,
            aggregate,
            warnings,
            wall_time_ms: 0.0,
        }
    }

    /// Copy with every wall-time field zeroed, for reproducibility checks.
    pub fn without_timing(&self) -> RunManifest {
        let mut m = self.clone();
        m.wall_time_ms = 0.0;
        for t in &mut m.trials {
            for c in &mut t.checkpoints {
                c.wall_time_ms = 0.0;
            }
        }
        m
    }

    pub fn final_row(&self) -> Option<&AggregateRow> {
        self.aggregate.last()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest values are finite")
    }
}

fn notes(config: &RunConfig) -> Vec<String> {
    use crate::config::{ProbeLabels, SolverKind};
    let mut n = vec![
        "mse is the mean over samples and output coordinates of (scores - one_hot)^2".to_string(),
        "zero_one is the argmax misclassification rate, ties to the lowest class".to_string(),
    ];
    n.push(match config.probe.labels {
        ProbeLabels::Hidden => "probe fit on every clean hidden training label".to_string(),
        ProbeLabels::Deduced => {
            "probe fit on deduced or revealed labels only; constant zero scores when none exist".to_string()
        }
    });
    n.push(match config.solver.kind {
        SolverKind::ClosedForm => {
            "closed-form embedding columns are eigenvectors scaled by sqrt(eigenvalue), negatives clipped to zero"
                .to_string()
        }
        SolverKind::Sgd => "sgd embedding is features . theta, trained continuously across checkpoints".to_string(),
    });
    n.push("aggregate std is the sample standard deviation (n - 1)".to_string());
    n
}

pub fn aggregate(schedule: &[u64], trials: &[TrialRecord]) -> Vec<AggregateRow> {
    let done: Vec<&TrialRecord> = trials.iter().filter(|t| t.is_completed()).collect();
    schedule
        .iter()
        .enumerate()
        .map(|(k, &q)| {
            let pick = |f: &dyn Fn(&CheckpointRecord) -> f64| -> Vec<f64> {
                done.iter().filter_map(|t| t.checkpoints.get(k)).map(f).collect()
            };
            let mse = pick(&|c| c.test.mse);
            let zo = pick(&|c| c.test.zero_one);
            AggregateRow {
                queries: q,
                trials: mse.len(),
                mean_mse: mean(&mse),
                std_mse: sample_std(&mse),
                mean_zero_one: mean(&zo),
                std_zero_one: sample_std(&zo),
                mean_components: mean(&pick(&|c| c.component_count as f64)),
                mean_train_mse: mean(&pick(&|c| c.train.mse)),
                mean_train_zero_one: mean(&pick(&|c| c.train.zero_one)),
                mean_known_fraction: mean(&pick(&|c| c.known_entry_fraction)),
                mean_answers: mean(&pick(&|c| c.answers_used as f64)),
            }
        })
        .collect()
}
