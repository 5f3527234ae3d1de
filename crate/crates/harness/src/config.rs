//! Run configuration.
//!
//! Every section has defaults, unknown keys are rejected, and
//! [`RunConfig::resolve`] fills in everything left implicit so the resolved
//! copy stored in a manifest is enough to rerun the experiment.

use std::path::Path;

use pal_core::kernel::KernelConfig;
use pal_core::oracles::NoiseMode;
use pal_core::parallel::Execution;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetSpec,
    pub graph: GraphSpec,
    pub oracle: OracleSpec,
    pub solver: SolverSpec,
    pub probe: ProbeSpec,
    /// Query counts at which to evaluate. Defaults to every oracle batch up to
    /// `2 N C` queries, or `[0]` when no oracle runs.
    pub checkpoints: Option<Vec<u64>>,
    pub trials: usize,
    pub seed: u64,
    pub execution: Execution,
    pub sweep: SweepSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dataset: DatasetSpec::default(),
            graph: GraphSpec::default(),
            oracle: OracleSpec::default(),
            solver: SolverSpec::default(),
            probe: ProbeSpec::default(),
            checkpoints: None,
            trials: 1,
            seed: 0,
            execution: Execution::Parallel,
            sweep: SweepSpec::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    Circles,
    Gaussian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSpec {
    pub generator: Generator,
    /// Original samples before augmentation.
    pub n: usize,
    pub classes: usize,
    /// Radial noise for circles, per-coordinate sigma for the mixture.
    pub noise: f64,
    pub test_size: usize,
    pub views: usize,
    pub epochs: usize,
    pub aug_std: f64,
    /// Labels revealed up front, counted over training nodes.
    pub revealed: usize,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec {
            generator: Generator::Circles,
            n: 100,
            classes: 4,
            noise: 0.02,
            test_size: 1000,
            views: 1,
            epochs: 1,
            aug_std: 0.05,
            revealed: 0,
        }
    }
}

impl DatasetSpec {
    /// Training nodes after augmentation.
    pub fn nodes(&self) -> usize {
        self.n * self.views * self.epochs
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphMode {
    /// Whatever the oracle has discovered so far.
    Oracle,
    Ssl,
    Supervised,
    /// Supervised entries among revealed labels only.
    Partial,
    /// `(1 - alpha) G_ssl + alpha Y Y^T` over revealed labels.
    Mixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphSpec {
    pub mode: GraphMode,
    pub alpha: f64,
    /// Solve on `2G - 1` over known entries instead of zero-filling.
    pub contrastive: bool,
    /// Share of stored entries forgotten before solving (fixed graph modes).
    pub missing_fraction: f64,
}

impl Default for GraphSpec {
    fn default() -> Self {
        GraphSpec {
            mode: GraphMode::Oracle,
            alpha: 0.5,
            contrastive: false,
            missing_fraction: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleKind {
    Off,
    Captcha,
    PassiveSupervised,
    PassiveSsl,
    Nnclr,
    Pruning,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    Uniform,
    Confidence,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSpec {
    pub p: f64,
    pub mode: NoiseMode,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec {
            p: 0.0,
            mode: NoiseMode::PerAnswer,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleSpec {
    /// Defaults to `captcha` in oracle graph mode and `off` otherwise.
    pub kind: Option<OracleKind>,
    pub batch_size: usize,
    /// Class weights for captcha targeting.
    pub prior: Option<Vec<f64>>,
    pub sampler: SamplerKind,
    /// Clusters for the pruning sampler; defaults to the class count.
    pub pruning_k: Option<usize>,
    pub pruning_threshold: f64,
    /// Regularisation pairs per passive SSL query.
    pub reg_pairs: usize,
    pub noise: NoiseSpec,
    /// Seconds to wait for a human answer before giving up.
    pub timeout_secs: u64,
}

impl Default for OracleSpec {
    fn default() -> Self {
        OracleSpec {
            kind: None,
            batch_size: 10,
            prior: None,
            sampler: SamplerKind::Uniform,
            pruning_k: None,
            pruning_threshold: 0.1,
            reg_pairs: 1,
            noise: NoiseSpec::default(),
            timeout_secs: 600,
        }
    }
}

impl OracleSpec {
    pub fn kind(&self) -> OracleKind {
        self.kind.unwrap_or(OracleKind::Off)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    ClosedForm,
    Sgd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decay {
    Constant,
    /// Linear to zero over all steps of the run.
    Linear,
    InverseSqrt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairSampling {
    Uniform,
    Known,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SgdSpec {
    /// Random Fourier features; the bandwidth is the kernel's.
    pub features: usize,
    /// Pairs per step.
    pub batch: usize,
    /// Step size per pair; the summed minibatch gradient is scaled by
    /// `rate / batch`.
    pub rate: f64,
    pub decay: Decay,
    /// Steps run before each checkpoint, continuing from the current head.
    pub steps: usize,
    pub init_scale: f64,
    pub pairs: PairSampling,
}

impl Default for SgdSpec {
    fn default() -> Self {
        SgdSpec {
            features: 256,
            batch: 128,
            rate: 0.05,
            decay: Decay::Linear,
            steps: 20_000,
            init_scale: 0.01,
            pairs: PairSampling::Uniform,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSpec {
    pub kind: SolverKind,
    #[serde(deserialize_with = "kernel_with_defaults")]
    pub kernel: KernelConfig,
    pub sgd: SgdSpec,
}

impl Default for SolverSpec {
    fn default() -> Self {
        SolverSpec {
            kind: SolverKind::ClosedForm,
            kernel: KernelSpec::default().into(),
            sgd: SgdSpec::default(),
        }
    }
}

/// Kernel fields as read from a config file. Omitted fields take the run
/// defaults, whose jitter is larger than the library's.
#[derive(Deserialize)]
#[serde(default, deny_unknown_fields)]
struct KernelSpec {
    bandwidth: f64,
    ridge: f64,
    jitter: f64,
    embed_dim: usize,
}

impl Default for KernelSpec {
    fn default() -> Self {
        KernelSpec {
            bandwidth: 0.5,
            ridge: 1e-6,
            jitter: 1e-3,
            embed_dim: 5,
        }
    }
}

impl From<KernelSpec> for KernelConfig {
    fn from(k: KernelSpec) -> Self {
        KernelConfig {
            bandwidth: k.bandwidth,
            ridge: k.ridge,
            jitter: k.jitter,
            embed_dim: k.embed_dim,
        }
    }
}

fn kernel_with_defaults<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<KernelConfig, D::Error> {
    KernelSpec::deserialize(d).map(Into::into)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeLabels {
    /// Every hidden training label, clean of any corruption.
    Hidden,
    /// Only labels the run has deduced or revealed.
    Deduced,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeSpec {
    pub ridge: f64,
    pub labels: ProbeLabels,
}

impl Default for ProbeSpec {
    fn default() -> Self {
        ProbeSpec {
            ridge: 1e-6,
            labels: ProbeLabels::Hidden,
        }
    }
}

/// Parameter grids for the sweep subcommands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub alphas: Vec<f64>,
    /// Revealed-label counts for the mixing sweep; `null` entries mean all.
    pub label_counts: Vec<Option<usize>>,
    pub noise_levels: Vec<f64>,
    pub missing_fractions: Vec<f64>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            alphas: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            label_counts: vec![Some(0), Some(20), Some(100), None],
            noise_levels: vec![0.0, 0.1, 0.3, 0.5],
            missing_fractions: vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0],
        }
    }
}

fn unit_interval(name: &str, v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return Err(HarnessError::config(format!("{name} = {v} is outside [0, 1]")));
    }
    Ok(())
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| HarnessError::config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| HarnessError::config(format!("{}: {e}", path.display())))
    }

    /// Validate and materialize every implicit default.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut c = self.clone();
        let d = &c.dataset;
        if c.trials == 0 {
            return Err(HarnessError::config("trials must be at least 1"));
        }
        if d.classes < 2 {
            return Err(HarnessError::config("need at least 2 classes"));
        }
        if d.n < d.classes {
            return Err(HarnessError::config("need at least one sample per class"));
        }
        if d.test_size == 0 {
            return Err(HarnessError::config("test_size must be positive"));
        }
        if d.views == 0 || d.epochs == 0 {
            return Err(HarnessError::config("views and epochs must be at least 1"));
        }
        if d.revealed > d.nodes() {
            return Err(HarnessError::config(format!(
                "cannot reveal {} labels of {} training nodes",
                d.revealed,
                d.nodes()
            )));
        }
        if !(d.noise >= 0.0 && d.noise.is_finite()) || !(d.aug_std >= 0.0 && d.aug_std.is_finite()) {
            return Err(HarnessError::config("noise levels must be non-negative"));
        }
        unit_interval("graph.alpha", c.graph.alpha)?;
        unit_interval("graph.missing_fraction", c.graph.missing_fraction)?;
        unit_interval("oracle.noise.p", c.oracle.noise.p)?;
        c.solver.kernel.validate().map_err(|e| HarnessError::config(e.to_string()))?;
        if !(c.probe.ridge >= 0.0) {
            return Err(HarnessError::config("probe ridge must be non-negative"));
        }

        let mode = c.graph.mode;
        let kind = match (mode, c.oracle.kind) {
            (GraphMode::Oracle, None) => OracleKind::Captcha,
            (GraphMode::Oracle, Some(OracleKind::Off)) => {
                return Err(HarnessError::config("oracle graph mode needs an oracle"));
            }
            (GraphMode::Oracle, Some(k)) => k,
            (_, None) | (_, Some(OracleKind::Off)) => OracleKind::Off,
            (m, Some(k)) => {
                return Err(HarnessError::config(format!(
                    "oracle {k:?} cannot run on the fixed {m:?} graph"
                )));
            }
        };
        c.oracle.kind = Some(kind);
        if kind != OracleKind::Off && c.oracle.batch_size == 0 {
            return Err(HarnessError::config("oracle batch_size must be positive"));
        }
        if kind == OracleKind::Nnclr && c.oracle.batch_size < 2 {
            return Err(HarnessError::config("nnclr minibatches need at least 2 samples"));
        }
        if kind == OracleKind::PassiveSsl && d.views < 2 {
            return Err(HarnessError::config("passive_ssl needs views >= 2"));
        }
        if matches!(mode, GraphMode::Ssl | GraphMode::Mixed) && d.views < 2 {
            return Err(HarnessError::config("SSL and mixed graphs need views >= 2"));
        }
        if mode == GraphMode::Oracle && c.graph.missing_fraction > 0.0 {
            return Err(HarnessError::config("missing_fraction applies to fixed graph modes only"));
        }
        if kind == OracleKind::Off && c.oracle.noise.p > 0.0 && c.oracle.noise.mode == NoiseMode::PerAnswer {
            return Err(HarnessError::config(
                "per-answer noise needs an oracle; use corrupt_labels for fixed graphs",
            ));
        }
        if let Some(p) = &c.oracle.prior {
            if p.len() != d.classes || p.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
                return Err(HarnessError::config("oracle.prior needs one positive weight per class"));
            }
        }
        if kind == OracleKind::Pruning {
            let k = *c.oracle.pruning_k.get_or_insert(d.classes);
            if k == 0 || k > d.nodes() {
                return Err(HarnessError::config("pruning_k must be in 1..=N"));
            }
        }
        if c.solver.kind == SolverKind::Sgd {
            let s = &c.solver.sgd;
            if s.features == 0 || s.batch == 0 || s.steps == 0 {
                return Err(HarnessError::config("sgd features, batch and steps must be positive"));
            }
            if !(s.rate > 0.0 && s.rate.is_finite()) || !(s.init_scale >= 0.0) {
                return Err(HarnessError::config("sgd rate must be positive"));
            }
        }

        let checkpoints = match c.checkpoints.take() {
            Some(cp) => cp,
            None if kind == OracleKind::Off => vec![0],
            None => {
                let limit = 2 * (d.nodes() * d.classes) as u64;
                (0..=limit).step_by(c.oracle.batch_size).collect()
            }
        };
        if checkpoints.is_empty() {
            return Err(HarnessError::config("checkpoint schedule is empty"));
        }
        if checkpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(HarnessError::config("checkpoint schedule must be strictly increasing"));
        }
        if kind == OracleKind::Off && checkpoints != [0] {
            return Err(HarnessError::config("fixed graph modes evaluate at checkpoint 0 only"));
        }
        c.checkpoints = Some(checkpoints);
        Ok(c)
    }

    /// Resolved checkpoint schedule. Only meaningful after [`resolve`](Self::resolve).
    pub fn schedule(&self) -> &[u64] {
        self.checkpoints.as_deref().unwrap_or(&[])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_resolve() {
        let c = RunConfig::default().resolve().unwrap();
        assert_eq!(c.oracle.kind, Some(OracleKind::Captcha));
        let cp = c.schedule();
        assert_eq!(cp.first(), Some(&0));
        assert_eq!(cp.last(), Some(&800));
        assert_eq!(cp.len(), 81);
        assert_eq!(c.solver.kernel.jitter, 1e-3);
        let partial = RunConfig::from_json(r#"{"solver": {"kernel": {"embed_dim": 3}}}"#).unwrap();
        assert_eq!(partial.solver.kernel.jitter, 1e-3);
        assert_eq!(partial.solver.kernel.embed_dim, 3);
        assert!(RunConfig::from_json(r#"{"solver": {"kernel": {"rigde": 1}}}"#).is_err());
        // resolving twice changes nothing
        assert_eq!(c.resolve().unwrap(), c);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_json(r#"{"trails": 3}"#).is_err());
        assert!(RunConfig::from_json(r#"{"dataset": {"size": 3}}"#).is_err());
        assert!(RunConfig::from_json(r#"{"solver": {"kernel": {"bw": 1}}}"#).is_err());
        let c = RunConfig::from_json(r#"{"trials": 3, "dataset": {"n": 40}}"#).unwrap();
        assert_eq!(c.trials, 3);
        assert_eq!(c.dataset.n, 40);
        assert_eq!(c.dataset.classes, 4);
    }

    #[test]
    fn invariants_enforced() {
        let bad = |f: &dyn Fn(&mut RunConfig)| {
            let mut c = RunConfig::default();
            f(&mut c);
            assert!(matches!(c.resolve(), Err(HarnessError::Config(_))));
        };
        bad(&|c| c.trials = 0);
        bad(&|c| c.checkpoints = Some(vec![0, 10, 10]));
        bad(&|c| c.checkpoints = Some(vec![20, 10]));
        bad(&|c| c.checkpoints = Some(vec![]));
        bad(&|c| c.graph.alpha = 1.5);
        bad(&|c| c.oracle.kind = Some(OracleKind::Off));
        bad(&|c| {
            c.graph.mode = GraphMode::Supervised;
            c.oracle.kind = Some(OracleKind::Captcha);
        });
        bad(&|c| {
            c.graph.mode = GraphMode::Supervised;
            c.checkpoints = Some(vec![0, 10]);
        });
        bad(&|c| c.oracle.kind = Some(OracleKind::PassiveSsl));
        bad(&|c| c.dataset.revealed = 1000);
        bad(&|c| c.oracle.prior = Some(vec![1.0]));
    }

    #[test]
    fn fixed_graph_defaults() {
        let mut c = RunConfig::default();
        c.graph.mode = GraphMode::Supervised;
        let r = c.resolve().unwrap();
        assert_eq!(r.oracle.kind, Some(OracleKind::Off));
        assert_eq!(r.schedule(), &[0]);
    }

    #[test]
    fn resolved_config_round_trips() {
        let mut c = RunConfig::default();
        c.oracle.kind = Some(OracleKind::Pruning);
        let r = c.resolve().unwrap();
        assert_eq!(r.oracle.pruning_k, Some(4));
        let text = serde_json::to_string(&r).unwrap();
        assert_eq!(RunConfig::from_json(&text).unwrap(), r);
    }
}
