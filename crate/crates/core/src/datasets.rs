//! Synthetic datasets.
//!
//! Labels are assigned round-robin (`i mod C`), so class counts differ by at
//! most one and earlier classes take the remainder.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{PalError, Result};
use crate::graph::{AugmentationLayout, Layout};
use crate::labels::LabelMatrix;
use crate::rng::{self, Rng};

pub const DATASET_HEADER: &str = "pal-dataset";

/// Generator name and parameters, enough to regenerate the data.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub generator: String,
    pub params: BTreeMap<String, String>,
}

impl Provenance {
    fn new(generator: &str) -> Self {
        Provenance {
            generator: generator.to_string(),
            params: BTreeMap::new(),
        }
    }

    fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.params.insert(key.to_string(), value.to_string());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    pub x: DMatrix<f64>,
    pub hidden_labels: Vec<usize>,
    pub classes: usize,
    pub revealed: Vec<bool>,
    pub seed: u64,
    pub provenance: Provenance,
}

impl LabeledDataset {
    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn labels(&self) -> LabelMatrix {
        LabelMatrix::from_labels(&self.hidden_labels, self.classes).expect("labels in range")
    }

    /// Labels restricted to revealed rows.
    pub fn revealed_labels(&self) -> LabelMatrix {
        LabelMatrix::masked(&self.hidden_labels, self.classes, &self.revealed).expect("labels in range")
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes];
        for &c in &self.hidden_labels {
            counts[c] += 1;
        }
        counts
    }
}

fn check_classes(classes: usize) -> Result<()> {
    if classes < 2 {
        return Err(PalError::invalid("need at least 2 classes"));
    }
    Ok(())
}

fn check_std(name: &str, v: f64) -> Result<()> {
    if !(v >= 0.0 && v.is_finite()) {
        return Err(PalError::invalid(format!("{name} must be a non-negative finite number")));
    }
    Ok(())
}

fn normal(std: f64) -> Normal<f64> {
    Normal::new(0.0, std).expect("std checked non-negative and finite")
}

/// Concentric circles in the plane; class `c` has radius `(c + 1) / classes`.
///
/// Angles within a class are stratified: the k-th of m points takes
/// `2 pi (k + u) / m` with `u ~ U[0, 1)`, which keeps each angle uniform while
/// spreading points evenly around the ring. Radii get Gaussian noise.
pub fn concentric_circles(n: usize, classes: usize, noise_std: f64, seed: u64) -> Result<LabeledDataset> {
    circles_on_stream(n, classes, noise_std, seed, rng::TRAIN_DATA)
}

/// Same generator on an independent stream, for held-out evaluation.
pub fn concentric_circles_test(n: usize, classes: usize, noise_std: f64, seed: u64) -> Result<LabeledDataset> {
    circles_on_stream(n, classes, noise_std, seed, rng::TEST_DATA)
}

fn circles_on_stream(n: usize, classes: usize, noise_std: f64, seed: u64, stream: u64) -> Result<LabeledDataset> {
    check_classes(classes)?;
    check_std("noise_std", noise_std)?;
    let mut rng = rng::stream(seed, stream);
    let labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
    let noise = normal(noise_std);
    let mut x = DMatrix::zeros(n, 2);
    for c in 0..classes {
        let members: Vec<usize> = (c..n).step_by(classes).collect();
        let m = members.len() as f64;
        let base = (c + 1) as f64 / classes as f64;
        for (k, &i) in members.iter().enumerate() {
            let angle = std::f64::consts::TAU * (k as f64 + rng.random::<f64>()) / m;
            let r = base + noise.sample(&mut rng);
            x[(i, 0)] = r * angle.cos();
            x[(i, 1)] = r * angle.sin();
        }
    }
    Ok(LabeledDataset {
        x,
        hidden_labels: labels,
        classes,
        revealed: vec![false; n],
        seed,
        provenance: Provenance::new("circles")
            .with("n", n)
            .with("classes", classes)
            .with("noise", noise_std)
            .with("stream", stream),
    })
}

/// Class `c` centred at the basis vector `e_c` of `R^classes`.
pub fn gaussian_mixture(n: usize, classes: usize, sigma: f64, seed: u64) -> Result<LabeledDataset> {
    mixture_on_stream(n, classes, sigma, seed, rng::TRAIN_DATA)
}

pub fn gaussian_mixture_test(n: usize, classes: usize, sigma: f64, seed: u64) -> Result<LabeledDataset> {
    mixture_on_stream(n, classes, sigma, seed, rng::TEST_DATA)
}

fn mixture_on_stream(n: usize, classes: usize, sigma: f64, seed: u64, stream: u64) -> Result<LabeledDataset> {
    check_classes(classes)?;
    check_std("sigma", sigma)?;
    let mut rng = rng::stream(seed, stream);
    let noise = normal(sigma);
    let labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
    let mut x = DMatrix::zeros(n, classes);
    for i in 0..n {
        for d in 0..classes {
            let center = if d == labels[i] { 1.0 } else { 0.0 };
            x[(i, d)] = center + noise.sample(&mut rng);
        }
    }
    Ok(LabeledDataset {
        x,
        hidden_labels: labels,
        classes,
        revealed: vec![false; n],
        seed,
        provenance: Provenance::new("gaussian")
            .with("n", n)
            .with("classes", classes)
            .with("sigma", sigma)
            .with("stream", stream),
    })
}

/// `views * epochs` jittered copies of every sample, laid out contiguously.
pub fn augment(
    ds: &LabeledDataset,
    views: usize,
    epochs: usize,
    aug_std: f64,
    seed: u64,
) -> Result<(LabeledDataset, AugmentationLayout)> {
    if views == 0 || epochs == 0 {
        return Err(PalError::invalid("augment needs views >= 1 and epochs >= 1"));
    }
    check_std("aug_std", aug_std)?;
    let mut rng = rng::stream(seed, rng::AUGMENT);
    let noise = normal(aug_std);
    let per = views * epochs;
    let n = ds.n() * per;
    let mut x = DMatrix::zeros(n, ds.dim());
    let mut labels = Vec::with_capacity(n);
    let mut revealed = Vec::with_capacity(n);
    for s in 0..ds.n() {
        for w in 0..per {
            let row = s * per + w;
            for d in 0..ds.dim() {
                x[(row, d)] = ds.x[(s, d)] + noise.sample(&mut rng);
            }
            labels.push(ds.hidden_labels[s]);
            revealed.push(ds.revealed[s]);
        }
    }
    let layout = AugmentationLayout {
        n0: ds.n(),
        views,
        epochs,
        layout: Layout::Contiguous,
    };
    let mut provenance = ds.provenance.clone();
    provenance = provenance
        .with("views", views)
        .with("epochs", epochs)
        .with("aug_std", aug_std)
        .with("aug_seed", seed);
    Ok((
        LabeledDataset {
            x,
            hidden_labels: labels,
            classes: ds.classes,
            revealed,
            seed: ds.seed,
            provenance,
        },
        layout,
    ))
}

/// Reassign `floor(fraction * N)` uniformly chosen labels to a different class.
pub fn corrupt_label_vector(labels: &mut [usize], classes: usize, fraction: f64, rng: &mut Rng) -> Result<Vec<usize>> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(PalError::invalid("corruption fraction outside [0, 1]"));
    }
    check_classes(classes)?;
    let n = labels.len();
    let count = (fraction * n as f64).floor() as usize;
    let mut chosen = sample(rng, n, count).into_vec();
    chosen.sort_unstable();
    for &i in &chosen {
        let shift = 1 + rng.random_range(0..classes - 1);
        labels[i] = (labels[i] + shift) % classes;
    }
    Ok(chosen)
}

pub fn corrupt_labels(ds: &LabeledDataset, fraction: f64, seed: u64) -> Result<LabeledDataset> {
    let mut out = ds.clone();
    let mut rng = rng::stream(seed, rng::CORRUPT);
    corrupt_label_vector(&mut out.hidden_labels, ds.classes, fraction, &mut rng)?;
    out.provenance = out
        .provenance
        .with("corrupt_fraction", fraction)
        .with("corrupt_seed", seed);
    Ok(out)
}

/// Reveal a uniform random subset of `count` labels.
pub fn reveal_labels(ds: &LabeledDataset, count: usize, seed: u64) -> Result<LabeledDataset> {
    if count > ds.n() {
        return Err(PalError::invalid(format!("cannot reveal {count} of {} labels", ds.n())));
    }
    let mut rng = rng::stream(seed, rng::REVEAL);
    let mut out = ds.clone();
    out.revealed = vec![false; ds.n()];
    for i in sample(&mut rng, ds.n(), count) {
        out.revealed[i] = true;
    }
    out.provenance = out
        .provenance
        .with("revealed", count)
        .with("reveal_seed", seed);
    Ok(out)
}

/// Text table: a provenance header, a column header, then
/// `x_0,...,x_{D-1},label,revealed` per sample.
pub fn write_dataset(ds: &LabeledDataset) -> String {
    let mut out = format!(
        "# {DATASET_HEADER} v1 generator={} classes={} seed={}",
        ds.provenance.generator, ds.classes, ds.seed
    );
    for (k, v) in &ds.provenance.params {
        if k != "classes" {
            let _ = write!(out, " {k}={v}");
        }
    }
    out.push('\n');
    let cols: Vec<String> = (0..ds.dim()).map(|d| format!("x{d}")).collect();
    let _ = writeln!(out, "{},label,revealed", cols.join(","));
    for i in 0..ds.n() {
        for d in 0..ds.dim() {
            let _ = write!(out, "{:?},", ds.x[(i, d)]);
        }
        let _ = writeln!(out, "{},{}", ds.hidden_labels[i], u8::from(ds.revealed[i]));
    }
    out
}

pub fn read_dataset(text: &str) -> Result<LabeledDataset> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| PalError::parse(1, "empty input"))?;
    let mut fields = header.split_whitespace();
    if fields.next() != Some("#") || fields.next() != Some(DATASET_HEADER) {
        return Err(PalError::parse(1, "missing pal-dataset header"));
    }
    match fields.next() {
        Some("v1") => {}
        Some(v) => return Err(PalError::UnsupportedVersion(v.to_string())),
        None => return Err(PalError::parse(1, "missing version")),
    }
    let mut params = BTreeMap::new();
    for f in fields {
        let (k, v) = f
            .split_once('=')
            .ok_or_else(|| PalError::parse(1, format!("bad header field {f:?}")))?;
        params.insert(k.to_string(), v.to_string());
    }
    let generator = params
        .remove("generator")
        .ok_or_else(|| PalError::parse(1, "header lacks generator"))?;
    let classes: usize = params
        .get("classes")
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| PalError::parse(1, "header lacks classes"))?;
    let seed: u64 = params
        .remove("seed")
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| PalError::parse(1, "header lacks seed"))?;

    let (_, columns) = lines.next().ok_or_else(|| PalError::parse(2, "missing column header"))?;
    let ncols = columns.split(',').count();
    if ncols < 3 {
        return Err(PalError::parse(2, "need at least one coordinate column"));
    }
    let dim = ncols - 2;
    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut revealed = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != ncols {
            return Err(PalError::parse(
                lineno,
                format!("expected {ncols} columns, found {}", cells.len()),
            ));
        }
        for cell in &cells[..dim] {
            let v: f64 = cell
                .trim()
                .parse()
                .map_err(|_| PalError::parse(lineno, format!("bad coordinate {cell:?}")))?;
            if !v.is_finite() {
                return Err(PalError::parse(lineno, "non-finite coordinate"));
            }
            values.push(v);
        }
        let label: usize = cells[dim]
            .trim()
            .parse()
            .map_err(|_| PalError::parse(lineno, "bad label"))?;
        if label >= classes {
            return Err(PalError::parse(
                lineno,
                format!("label {label} outside [0, {classes})"),
            ));
        }
        labels.push(label);
        revealed.push(match cells[dim + 1].trim() {
            "0" => false,
            "1" => true,
            other => return Err(PalError::parse(lineno, format!("bad revealed flag {other:?}"))),
        });
    }
    let n = labels.len();
    Ok(LabeledDataset {
        x: DMatrix::from_row_slice(n, dim, &values),
        hidden_labels: labels,
        classes,
        revealed,
        seed,
        provenance: Provenance { generator, params },
    })
}
