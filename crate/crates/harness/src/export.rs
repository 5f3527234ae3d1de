//! CSV and JSON output.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use crate::error::{HarnessError, Result};
use crate::manifest::RunManifest;
use crate::sweep::SweepReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(HarnessError::config(format!("unknown export format {other:?}"))),
        }
    }
}

#[derive(Serialize)]
struct CsvRow {
    queries: u64,
    mean_mse: Option<f64>,
    std_mse: Option<f64>,
    mean_zero_one: Option<f64>,
    std_zero_one: Option<f64>,
    mean_components: Option<f64>,
}

fn csv_string<T: Serialize>(rows: impl IntoIterator<Item = T>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| HarnessError::Csv(e.into_error().into()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// One row per checkpoint; missing values are empty cells.
pub fn aggregate_csv(m: &RunManifest) -> Result<String> {
    let rows = m.aggregate.iter().map(|a| CsvRow {
        queries: a.queries,
        mean_mse: a.mean_mse,
        std_mse: a.std_mse,
        mean_zero_one: a.mean_zero_one,
        std_zero_one: a.std_zero_one,
        mean_components: a.mean_components,
    });
    let out = csv_string(rows)?;
    if m.aggregate.is_empty() {
        return Ok("queries,mean_mse,std_mse,mean_zero_one,std_zero_one,mean_components\n".to_string());
    }
    Ok(out)
}

pub fn manifest_json(m: &RunManifest) -> String {
    m.to_json()
}

pub fn parse_manifest(text: &str) -> Result<RunManifest> {
    serde_json::from_str(text).map_err(|e| HarnessError::Json {
        path: PathBuf::from("<manifest>"),
        source: e,
    })
}

pub fn read_manifest(path: &Path) -> Result<RunManifest> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| HarnessError::Json {
        path: path.to_path_buf(),
        source: e,
    })
}

pub fn export(m: &RunManifest, format: Format) -> Result<String> {
    match format {
        Format::Csv => aggregate_csv(m),
        Format::Json => Ok(manifest_json(m)),
    }
}

fn write(path: PathBuf, text: &str) -> Result<PathBuf> {
    fs::write(&path, text).map_err(|e| HarnessError::io(&path, e))?;
    Ok(path)
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))
}

/// `manifest.json` and `aggregate.csv` under `dir`.
pub fn write_run(m: &RunManifest, dir: &Path) -> Result<Vec<PathBuf>> {
    ensure_dir(dir)?;
    Ok(vec![
        write(dir.join("manifest.json"), &manifest_json(m))?,
        write(dir.join("aggregate.csv"), &aggregate_csv(m)?)?,
    ])
}

#[derive(Serialize)]
struct SummaryRow<'a> {
    label: &'a str,
    params: String,
    trials: usize,
    failed_trials: usize,
    mean_mse: Option<f64>,
    mean_zero_one: Option<f64>,
    mean_components: Option<f64>,
}

/// Each sweep point as `<label>.json` and `<label>.csv`, plus `summary.json`
/// and `summary.csv`.
pub fn write_sweep(report: &SweepReport, dir: &Path) -> Result<Vec<PathBuf>> {
    ensure_dir(dir)?;
    let mut out = Vec::new();
    for r in &report.runs {
        out.push(write(dir.join(format!("{}.json", r.label)), &manifest_json(&r.manifest))?);
        out.push(write(dir.join(format!("{}.csv", r.label)), &aggregate_csv(&r.manifest)?)?);
    }
    let summary = serde_json::json!({
        "version": 1,
        "kind": report.kind,
        "rows": report.rows,
        "spearman": report.spearman,
    });
    out.push(write(
        dir.join("summary.json"),
        &serde_json::to_string_pretty(&summary).expect("summary values are finite"),
    )?);
    let rows = report.rows.iter().map(|r| SummaryRow {
        label: &r.label,
        params: r
            .params
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(";"),
        trials: r.trials,
        failed_trials: r.failed_trials,
        mean_mse: r.mean_mse,
        mean_zero_one: r.mean_zero_one,
        mean_components: r.mean_components,
    });
    out.push(write(dir.join("summary.csv"), &csv_string(rows)?)?);
    Ok(out)
}
