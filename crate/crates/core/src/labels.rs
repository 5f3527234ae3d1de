use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{PalError, Result};

/// Per-sample class assignment, with `None` for an unknown label.
///
/// Densifies to the usual one-hot matrix; unknown rows are all zero.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelMatrix {
    classes: usize,
    rows: Vec<Option<usize>>,
}

impl LabelMatrix {
    pub fn new(classes: usize, rows: Vec<Option<usize>>) -> Result<Self> {
        if let Some(bad) = rows.iter().flatten().find(|&&c| c >= classes) {
            return Err(PalError::IndexOutOfRange {
                index: *bad,
                bound: classes,
            });
        }
        Ok(LabelMatrix { classes, rows })
    }

    /// Fully labeled matrix from class ids.
    pub fn from_labels(labels: &[usize], classes: usize) -> Result<Self> {
        Self::new(classes, labels.iter().map(|&c| Some(c)).collect())
    }

    /// Labeled matrix with classes inferred as `max + 1`.
    pub fn from_labels_auto(labels: &[usize]) -> Self {
        let classes = labels.iter().max().map_or(0, |m| m + 1);
        Self::from_labels(labels, classes).expect("classes cover every label")
    }

    /// Keep only rows where `mask` is true.
    pub fn masked(labels: &[usize], classes: usize, mask: &[bool]) -> Result<Self> {
        if labels.len() != mask.len() {
            return Err(PalError::DimensionMismatch {
                context: "label mask",
                expected: labels.len(),
                found: mask.len(),
            });
        }
        Self::new(
            classes,
            labels
                .iter()
                .zip(mask)
                .map(|(&c, &m)| m.then_some(c))
                .collect(),
        )
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, i: usize) -> Option<usize> {
        self.rows[i]
    }

    pub fn rows(&self) -> &[Option<usize>] {
        &self.rows
    }

    pub fn is_complete(&self) -> bool {
        self.rows.iter().all(Option::is_some)
    }

    pub fn labeled_count(&self) -> usize {
        self.rows.iter().flatten().count()
    }

    /// Class ids, failing on the first unknown row.
    pub fn to_labels(&self) -> Result<Vec<usize>> {
        self.rows
            .iter()
            .enumerate()
            .map(|(row, c)| c.ok_or(PalError::UnlabeledRow { row }))
            .collect()
    }

    pub fn class_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.classes];
        for c in self.rows.iter().flatten() {
            sizes[*c] += 1;
        }
        sizes
    }

    pub fn one_hot(&self) -> DMatrix<f64> {
        let mut y = DMatrix::zeros(self.n(), self.classes);
        for (i, c) in self.rows.iter().enumerate() {
            if let Some(c) = c {
                y[(i, *c)] = 1.0;
            }
        }
        y
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_hot_rows_sum_to_zero_or_one() {
        let y = LabelMatrix::new(3, vec![Some(0), None, Some(2)]).unwrap();
        let m = y.one_hot();
        let sums: Vec<f64> = (0..3).map(|i| m.row(i).sum()).collect();
        assert_eq!(sums, vec![1.0, 0.0, 1.0]);
        assert_eq!(y.labeled_count(), 2);
        assert_eq!(y.to_labels(), Err(PalError::UnlabeledRow { row: 1 }));
    }

    #[test]
    fn rejects_out_of_range_class() {
        assert!(LabelMatrix::from_labels(&[0, 3], 3).is_err());
    }

    #[test]
    fn class_sizes_count_known_rows() {
        let y = LabelMatrix::masked(&[0, 0, 1, 1], 2, &[true, false, true, true]).unwrap();
        assert_eq!(y.class_sizes(), vec![1, 2]);
    }
}
