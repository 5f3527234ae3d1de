use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::SimilarityGraph;
use crate::error::{PalError, Result};
use crate::linalg::sym_eigen;
use crate::losses::Embedding;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SquareRoot {
    pub z: Embedding,
    /// Top eigenvalues before clipping, descending, one per column of `z`.
    pub eigenvalues: Vec<f64>,
    /// Number of columns whose eigenvalue was negative and clipped to zero.
    pub clipped: usize,
}

/// `Z = P sqrt(max(D, 0))` over the top `k` eigenpairs of the densified graph.
///
/// Columns past the graph's size are zero.
pub fn eigen_square_root(g: &SimilarityGraph, k: usize) -> Result<SquareRoot> {
    if k == 0 {
        return Err(PalError::invalid("k must be at least 1"));
    }
    let n = g.n();
    let eig = sym_eigen(&g.dense())?;
    let mut z = DMatrix::zeros(n, k);
    let mut eigenvalues = Vec::with_capacity(k);
    let mut clipped = 0;
    for c in 0..k.min(n) {
        let lambda = eig.values[c];
        eigenvalues.push(lambda);
        if lambda < 0.0 {
            clipped += 1;
            continue;
        }
        let s = lambda.sqrt();
        for r in 0..n {
            z[(r, c)] = eig.vectors[(r, c)] * s;
        }
    }
    eigenvalues.resize(k, 0.0);
    Ok(SquareRoot {
        z: Embedding::new(z)?,
        eigenvalues,
        clipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_sup_graph;
    use crate::labels::LabelMatrix;

    #[test]
    fn identity_gives_orthogonal_root() {
        let g = SimilarityGraph::from_dense(&DMatrix::identity(3, 3)).unwrap();
        let r = eigen_square_root(&g, 3).unwrap();
        let z = r.z.matrix();
        assert!((z * z.transpose() - DMatrix::<f64>::identity(3, 3)).norm() < 1e-12);
        assert!((z.transpose() * z - DMatrix::<f64>::identity(3, 3)).norm() < 1e-12);
    }

    #[test]
    fn supervised_singular_values_are_sqrt_class_sizes() {
        let g = build_sup_graph(&LabelMatrix::from_labels_auto(&[0, 0, 1])).unwrap();
        let r = eigen_square_root(&g, 2).unwrap();
        let sv = r.z.matrix().clone().singular_values();
        let mut sv: Vec<f64> = sv.iter().copied().collect();
        sv.sort_by(|a, b| b.total_cmp(a));
        assert!((sv[0] - 2f64.sqrt()).abs() < 1e-12);
        assert!((sv[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn all_ones_rank_one() {
        let g = SimilarityGraph::from_dense(&DMatrix::from_element(4, 4, 1.0)).unwrap();
        let r = eigen_square_root(&g, 1).unwrap();
        for v in r.z.matrix().iter() {
            assert!((v.abs() - 1.0).abs() < 1e-12);
        }
        let first = r.z.matrix()[(0, 0)].signum();
        assert!(r.z.matrix().iter().all(|v| v.signum() == first));
    }

    #[test]
    fn pads_and_records_clipping() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let g = SimilarityGraph::from_dense(&m).unwrap();
        let r = eigen_square_root(&g, 3).unwrap();
        assert_eq!(r.z.k(), 3);
        assert_eq!(r.clipped, 1);
        assert!(r.z.matrix().column(1).iter().all(|&v| v == 0.0));
        assert!(r.z.matrix().column(2).iter().all(|&v| v == 0.0));
    }
}
