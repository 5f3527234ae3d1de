//! Similarity graphs.
//!
//! Entries live in a sparse map keyed by the canonical pair `i <= j`, so the
//! store is symmetric by construction. An entry is either `Unknown` or
//! `Known(value)`; the two are kept apart because a known dissimilarity
//! (`Known(0)`) means something different from "never asked" once the graph is
//! turned contrastive.

mod components;
mod deduce;
mod io;
mod recover;
mod spectral;

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{PalError, Result};
use crate::labels::LabelMatrix;

pub use components::{connected_components, Components, UnionFind};
pub use deduce::{
    deduce_from_membership, Conflict, ConflictPolicy, Deducer, Deduction, Member, Membership,
    NewEntry, Relation,
};
pub use io::{read_graph, write_graph, GRAPH_HEADER};
pub use recover::recover_labels;
pub use spectral::{eigen_square_root, SquareRoot};

/// Value stored for an observed positive relation.
pub const POSITIVE: f64 = 1.0;
/// Value stored for an observed negative relation, matching `Y Y^T`.
pub const NEGATIVE: f64 = 0.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum EntryState {
    Unknown,
    Known(f64),
}

impl EntryState {
    pub fn value_or_zero(self) -> f64 {
        match self {
            EntryState::Unknown => 0.0,
            EntryState::Known(v) => v,
        }
    }

    pub fn is_known(self) -> bool {
        matches!(self, EntryState::Known(_))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityGraph {
    n: usize,
    entries: BTreeMap<(usize, usize), f64>,
}

fn canonical(i: usize, j: usize) -> (usize, usize) {
    if i <= j {
        (i, j)
    } else {
        (j, i)
    }
}

impl SimilarityGraph {
    /// Graph on `n` nodes with every entry unknown.
    pub fn new(n: usize) -> Self {
        SimilarityGraph {
            n,
            entries: BTreeMap::new(),
        }
    }

    /// Every entry known, taken from the upper triangle of `m`.
    pub fn from_dense(m: &DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(PalError::DimensionMismatch {
                context: "from_dense",
                expected: m.nrows(),
                found: m.ncols(),
            });
        }
        let mut g = SimilarityGraph::new(m.nrows());
        for i in 0..m.nrows() {
            for j in i..m.ncols() {
                g.entries.insert((i, j), m[(i, j)]);
            }
        }
        Ok(g)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    fn check(&self, i: usize, j: usize) -> Result<()> {
        for idx in [i, j] {
            if idx >= self.n {
                return Err(PalError::IndexOutOfRange {
                    index: idx,
                    bound: self.n,
                });
            }
        }
        Ok(())
    }

    pub fn get(&self, i: usize, j: usize) -> EntryState {
        match self.entries.get(&canonical(i, j)) {
            Some(&v) => EntryState::Known(v),
            None => EntryState::Unknown,
        }
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) -> Result<()> {
        self.check(i, j)?;
        if !value.is_finite() {
            return Err(PalError::NonFinite("graph entry"));
        }
        self.entries.insert(canonical(i, j), value);
        Ok(())
    }

    /// Forget entry `(i, j)`; returns its previous state.
    pub fn forget(&mut self, i: usize, j: usize) -> Result<EntryState> {
        self.check(i, j)?;
        Ok(match self.entries.remove(&canonical(i, j)) {
            Some(v) => EntryState::Known(v),
            None => EntryState::Unknown,
        })
    }

    /// Known entries as `(i, j, value)` with `i <= j`, in sorted order.
    pub fn known(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.entries.iter().map(|(&(i, j), &v)| (i, j, v))
    }

    /// Number of stored pairs (each off-diagonal pair once).
    pub fn stored_len(&self) -> usize {
        self.entries.len()
    }

    /// Share of the `n * n` ordered index pairs whose entry is known.
    pub fn known_entry_fraction(&self) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        let ordered: usize = self
            .entries
            .keys()
            .map(|&(i, j)| if i == j { 1 } else { 2 })
            .sum();
        ordered as f64 / (self.n * self.n) as f64
    }

    pub fn is_complete(&self) -> bool {
        self.entries.len() == self.n * (self.n + 1) / 2
    }

    /// Dense symmetric matrix with unknown entries read as 0.
    pub fn dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for (&(i, j), &v) in &self.entries {
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
        m
    }

    /// `d_i = sum_j G_ij` on the densified graph.
    pub fn degree(&self) -> DVector<f64> {
        let mut d = DVector::zeros(self.n);
        for (&(i, j), &v) in &self.entries {
            d[i] += v;
            if i != j {
                d[j] += v;
            }
        }
        d
    }

    /// Observed dissimilarities (`Known(0)`) become `Known(-1)`.
    pub fn to_contrastive(&self) -> SimilarityGraph {
        let entries = self
            .entries
            .iter()
            .map(|(&k, &v)| (k, if v == 0.0 { -1.0 } else { v }))
            .collect();
        SimilarityGraph { n: self.n, entries }
    }
}

pub fn degree_matrix(g: &SimilarityGraph) -> DVector<f64> {
    g.degree()
}

pub fn to_contrastive(g: &SimilarityGraph) -> SimilarityGraph {
    g.to_contrastive()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    /// A sample's views occupy consecutive indices.
    #[default]
    Contiguous,
    /// View `w` of sample `s` sits at `w * n0 + s`.
    Strided,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentationLayout {
    pub n0: usize,
    pub views: usize,
    pub epochs: usize,
    pub layout: Layout,
}

impl AugmentationLayout {
    pub fn new(n0: usize, views: usize, epochs: usize, layout: Layout) -> Result<Self> {
        if n0 == 0 || epochs == 0 {
            return Err(PalError::invalid("layout needs n0 >= 1 and epochs >= 1"));
        }
        if views < 2 {
            return Err(PalError::invalid(
                "layout needs at least 2 views: a single view has no positive pair",
            ));
        }
        Ok(AugmentationLayout {
            n0,
            views,
            epochs,
            layout,
        })
    }

    pub fn total(&self) -> usize {
        self.n0 * self.views * self.epochs
    }

    /// Views of one sample across all epochs.
    pub fn group_size(&self) -> usize {
        self.views * self.epochs
    }

    /// Node index of view `w` (counting across epochs) of sample `s`.
    pub fn node(&self, s: usize, w: usize) -> usize {
        match self.layout {
            Layout::Contiguous => s * self.group_size() + w,
            Layout::Strided => w * self.n0 + s,
        }
    }

    /// Original sample a node was generated from.
    pub fn sample_of(&self, i: usize) -> usize {
        match self.layout {
            Layout::Contiguous => i / self.group_size(),
            Layout::Strided => i % self.n0,
        }
    }
}

/// Positive pairs between distinct augmentations of the same sample.
pub fn build_ssl_graph(layout: &AugmentationLayout) -> Result<SimilarityGraph> {
    let layout = AugmentationLayout::new(layout.n0, layout.views, layout.epochs, layout.layout)?;
    let mut g = SimilarityGraph::new(layout.total());
    let m = layout.group_size();
    for s in 0..layout.n0 {
        for a in 0..m {
            for b in (a + 1)..m {
                g.set(layout.node(s, a), layout.node(s, b), POSITIVE)?;
            }
        }
    }
    Ok(g)
}

/// `Y Y^T` for a fully labeled matrix, diagonal included.
pub fn build_sup_graph(labels: &LabelMatrix) -> Result<SimilarityGraph> {
    let ys = labels.to_labels()?;
    let n = ys.len();
    let mut g = SimilarityGraph::new(n);
    for i in 0..n {
        for j in i..n {
            let v = if ys[i] == ys[j] { POSITIVE } else { NEGATIVE };
            g.entries.insert((i, j), v);
        }
    }
    Ok(g)
}

/// `Ŷ Ŷ^T` restricted to pairs where both labels are known.
pub fn build_partial_sup_graph(labels: &LabelMatrix) -> SimilarityGraph {
    let n = labels.n();
    let known: Vec<(usize, usize)> = (0..n)
        .filter_map(|i| labels.get(i).map(|c| (i, c)))
        .collect();
    let mut g = SimilarityGraph::new(n);
    for (a, &(i, ci)) in known.iter().enumerate() {
        for &(j, cj) in &known[a..] {
            let v = if ci == cj { POSITIVE } else { NEGATIVE };
            g.entries.insert((i, j), v);
        }
    }
    g
}

/// `(1 - alpha) G_ssl + alpha Ŷ Ŷ^T`; known wherever either side is known.
pub fn mix_graphs(g_ssl: &SimilarityGraph, labels: &LabelMatrix, alpha: f64) -> Result<SimilarityGraph> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(PalError::invalid(format!("alpha {alpha} outside [0, 1]")));
    }
    if g_ssl.n() != labels.n() {
        return Err(PalError::DimensionMismatch {
            context: "mix_graphs",
            expected: g_ssl.n(),
            found: labels.n(),
        });
    }
    let sup = build_partial_sup_graph(labels);
    let mut out = SimilarityGraph::new(g_ssl.n());
    for (&k, &v) in &g_ssl.entries {
        out.entries.insert(k, (1.0 - alpha) * v);
    }
    for (&k, &v) in &sup.entries {
        let base = g_ssl.entries.get(&k).copied().unwrap_or(0.0);
        out.entries.insert(k, (1.0 - alpha) * base + alpha * v);
    }
    Ok(out)
}
