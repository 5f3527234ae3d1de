use super::OracleState;
use crate::error::{PalError, Result};

/// Result of the sequential template rule.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateDiscovery {
    /// Template node per discovered class, in discovery order.
    pub templates: Vec<usize>,
    /// Discovered class of every node.
    pub assignment: Vec<usize>,
    /// Pairwise probes asked.
    pub probes: usize,
}

/// Node 0 is the first template. Each later node is compared with the existing
/// templates in order; the first match gives its class, and a node matching
/// none becomes the next template.
pub fn discover_templates<F>(n: usize, mut same_class: F) -> TemplateDiscovery
where
    F: FnMut(usize, usize) -> bool,
{
    let mut templates = Vec::new();
    let mut assignment = Vec::with_capacity(n);
    let mut probes = 0;
    for i in 0..n {
        let mut found = None;
        for (c, &t) in templates.iter().enumerate() {
            probes += 1;
            if same_class(t, i) {
                found = Some(c);
                break;
            }
        }
        let c = found.unwrap_or_else(|| {
            templates.push(i);
            templates.len() - 1
        });
        assignment.push(c);
    }
    TemplateDiscovery {
        templates,
        assignment,
        probes,
    }
}

impl TemplateDiscovery {
    /// Install the templates and confirmed classes into `state`.
    pub fn apply(&self, state: &mut OracleState) -> Result<()> {
        if self.templates.len() > state.classes() {
            return Err(PalError::invalid(format!(
                "discovered {} classes but the state has {}",
                self.templates.len(),
                state.classes()
            )));
        }
        if self.assignment.len() != state.n() {
            return Err(PalError::DimensionMismatch {
                context: "template discovery",
                expected: state.n(),
                found: self.assignment.len(),
            });
        }
        for (i, &c) in self.assignment.iter().enumerate() {
            state.membership.confirm(i, c)?;
        }
        for (c, &t) in self.templates.iter().enumerate() {
            state.set_node_template(c, t)?;
        }
        let rows: Vec<usize> = (0..state.n()).collect();
        state.deducer.deduce_rows(&state.membership, &mut state.graph, &rows)?;
        state.queries_made += self.probes as u64;
        Ok(())
    }
}
