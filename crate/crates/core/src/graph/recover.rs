use super::{connected_components, SimilarityGraph};
use crate::error::{PalError, Result};
use crate::labels::LabelMatrix;

/// Labels from a complete supervised graph and one template per class.
///
/// Each positive-edge component takes the class of the single template it
/// contains, so recovery is exact rather than up to a rotation.
pub fn recover_labels(g: &SimilarityGraph, templates: &[(usize, usize)]) -> Result<LabelMatrix> {
    if !g.is_complete() {
        return Err(PalError::invalid("label recovery needs a complete graph"));
    }
    if let Some((i, j, v)) = g.known().find(|e| e.2 != 0.0 && e.2 != 1.0) {
        return Err(PalError::invalid(format!(
            "entry ({i}, {j}) = {v} is not a supervised value"
        )));
    }
    let comps = connected_components(g);
    let mut class_of = vec![None; comps.count];
    for &(node, class) in templates {
        if node >= g.n() {
            return Err(PalError::IndexOutOfRange {
                index: node,
                bound: g.n(),
            });
        }
        let c = comps.assignment[node];
        if class_of[c].is_some() {
            return Err(PalError::DuplicateTemplate { component: c });
        }
        class_of[c] = Some(class);
    }
    if let Some(c) = class_of.iter().position(Option::is_none) {
        return Err(PalError::MissingTemplate { component: c });
    }
    let classes = templates.iter().map(|t| t.1 + 1).max().unwrap_or(0);
    LabelMatrix::new(
        classes,
        comps.assignment.iter().map(|&c| class_of[c]).collect(),
    )
}
