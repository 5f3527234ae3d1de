//! Parameter sweeps over fixed graphs and the paired contrastive comparison.

use std::collections::BTreeMap;

use pal_core::oracles::NoiseMode;
use serde::{Deserialize, Serialize};

use crate::config::{GraphMode, OracleKind, RunConfig};
use crate::error::{HarnessError, Result};
use crate::manifest::RunManifest;
use crate::run::run_pal;
use crate::stats::spearman;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    Mixing,
    Noise,
    Missing,
    Contrastive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRun {
    /// File-name safe identifier.
    pub label: String,
    pub params: BTreeMap<String, f64>,
    pub manifest: RunManifest,
}

/// Final-checkpoint summary of one sweep point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub label: String,
    pub params: BTreeMap<String, f64>,
    pub trials: usize,
    pub failed_trials: usize,
    pub mean_mse: Option<f64>,
    pub mean_zero_one: Option<f64>,
    pub mean_components: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub kind: SweepKind,
    pub runs: Vec<SweepRun>,
    pub rows: Vec<SweepRow>,
    /// Rank correlation of mean component count with mean test zero-one
    /// error across the sweep (missing-entry sweep only).
    pub spearman: Option<f64>,
}

impl SweepReport {
    fn new(kind: SweepKind, runs: Vec<SweepRun>) -> Self {
        let rows: Vec<SweepRow> = runs
            .iter()
            .map(|r| {
                let last = r.manifest.final_row();
                SweepRow {
                    label: r.label.clone(),
                    params: r.params.clone(),
                    trials: r.manifest.trials.len(),
                    failed_trials: r.manifest.failed_trials,
                    mean_mse: last.and_then(|a| a.mean_mse),
                    mean_zero_one: last.and_then(|a| a.mean_zero_one),
                    mean_components: last.and_then(|a| a.mean_components),
                }
            })
            .collect();
        let spearman = (kind == SweepKind::Missing)
            .then(|| {
                let comp: Option<Vec<f64>> = rows.iter().map(|r| r.mean_components).collect();
                let err: Option<Vec<f64>> = rows.iter().map(|r| r.mean_zero_one).collect();
                spearman(&comp?, &err?)
            })
            .flatten();
        SweepReport {
            kind,
            runs,
            rows,
            spearman,
        }
    }

    pub fn run(&self, label: &str) -> Option<&RunManifest> {
        self.runs.iter().find(|r| r.label == label).map(|r| &r.manifest)
    }
}

fn point(label: String, params: &[(&str, f64)], config: &RunConfig) -> Result<SweepRun> {
    Ok(SweepRun {
        label,
        params: params.iter().map(|&(k, v)| (k.to_string(), v)).collect(),
        manifest: run_pal(config)?,
    })
}

/// `config` with the oracle switched off and the graph fixed to `mode`.
fn fixed(config: &RunConfig, mode: GraphMode) -> RunConfig {
    let mut c = config.clone();
    c.graph.mode = mode;
    c.graph.missing_fraction = 0.0;
    c.oracle.kind = Some(OracleKind::Off);
    c.oracle.noise.p = 0.0;
    c.checkpoints = None;
    c.dataset.revealed = 0;
    c
}

/// Cross product of mixing coefficients and revealed-label counts, plus the
/// pure SSL and fully supervised reference runs. A `None` label count
/// reveals every training node.
pub fn sweep_mixing(config: &RunConfig, alphas: &[f64], label_counts: &[Option<usize>]) -> Result<SweepReport> {
    if config.dataset.views < 2 {
        return Err(HarnessError::config("the mixing sweep needs views >= 2"));
    }
    if alphas.is_empty() || label_counts.is_empty() {
        return Err(HarnessError::config("the mixing sweep needs alphas and label counts"));
    }
    let nodes = config.dataset.nodes();
    let mut runs = vec![
        point("ssl".into(), &[], &fixed(config, GraphMode::Ssl))?,
        point("supervised".into(), &[], &fixed(config, GraphMode::Supervised))?,
    ];
    for &count in label_counts {
        let count = count.unwrap_or(nodes);
        for &alpha in alphas {
            let mut c = fixed(config, GraphMode::Mixed);
            c.graph.alpha = alpha;
            c.dataset.revealed = count;
            runs.push(point(
                format!("alpha{alpha}_labels{count}"),
                &[("alpha", alpha), ("labels", count as f64)],
                &c,
            )?);
        }
    }
    Ok(SweepReport::new(SweepKind::Mixing, runs))
}

/// Full supervised graph built from labels corrupted at each level; the
/// probe still reads clean labels.
pub fn sweep_noise(config: &RunConfig, levels: &[f64]) -> Result<SweepReport> {
    if levels.is_empty() {
        return Err(HarnessError::config("the noise sweep needs at least one level"));
    }
    let runs = levels
        .iter()
        .map(|&p| {
            let mut c = fixed(config, GraphMode::Supervised);
            c.oracle.noise.p = p;
            c.oracle.noise.mode = NoiseMode::CorruptLabels;
            point(format!("noise{p}"), &[("noise", p)], &c)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepReport::new(SweepKind::Noise, runs))
}

/// Full supervised graph with a share of its stored entries forgotten.
pub fn sweep_missing_entries(config: &RunConfig, fractions: &[f64]) -> Result<SweepReport> {
    if fractions.is_empty() {
        return Err(HarnessError::config("the missing-entry sweep needs at least one fraction"));
    }
    let runs = fractions
        .iter()
        .map(|&f| {
            let mut c = fixed(config, GraphMode::Supervised);
            c.graph.missing_fraction = f;
            point(format!("missing{f}"), &[("missing", f)], &c)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepReport::new(SweepKind::Missing, runs))
}

/// The same oracle trace solved twice: unknown entries zero-filled, then on
/// the contrastive graph.
pub fn compare_contrastive(config: &RunConfig) -> Result<SweepReport> {
    let runs = [false, true]
        .into_iter()
        .map(|flag| {
            let mut c = config.clone();
            c.graph.contrastive = flag;
            let label = if flag { "contrastive" } else { "plain" };
            point(label.into(), &[("contrastive", f64::from(u8::from(flag)))], &c)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepReport::new(SweepKind::Contrastive, runs))
}

/// Run `kind` with the grids from `config.sweep`.
pub fn run_sweep(kind: SweepKind, config: &RunConfig) -> Result<SweepReport> {
    let s = &config.sweep;
    match kind {
        SweepKind::Mixing => sweep_mixing(config, &s.alphas, &s.label_counts),
        SweepKind::Noise => sweep_noise(config, &s.noise_levels),
        SweepKind::Missing => sweep_missing_entries(config, &s.missing_fractions),
        SweepKind::Contrastive => compare_contrastive(config),
    }
}
