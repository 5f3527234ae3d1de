use rand::Rng as _;

use super::{OracleState, Query, QueryBatch};
use crate::error::{PalError, Result};
use crate::graph::AugmentationLayout;

/// The `t`-th consecutive pair of views within one sample and epoch.
///
/// Pairs run over samples, then epochs, then adjacent views, so the first
/// pair of sample `s` in epoch `ep` starts at view `ep * v`.
pub fn ssl_pair(layout: &AugmentationLayout, t: u64) -> Option<(usize, usize)> {
    let per_group = (layout.views - 1) as u64;
    let groups = (layout.n0 * layout.epochs) as u64;
    if per_group == 0 || t >= groups * per_group {
        return None;
    }
    let g = (t / per_group) as usize;
    let k = (t % per_group) as usize;
    let (s, ep) = (g / layout.epochs, g % layout.epochs);
    let w = ep * layout.views + k;
    Some((layout.node(s, w), layout.node(s, w + 1)))
}

/// Next positive pair by construction plus `reg_batch` uniform `J_t` pairs.
pub fn passive_ssl_oracle(state: &mut OracleState, layout: &AugmentationLayout, reg_batch: usize) -> Result<QueryBatch> {
    if layout.views < 2 {
        return Err(PalError::invalid("passive SSL oracle needs at least 2 views"));
    }
    if layout.total() != state.n() {
        return Err(PalError::DimensionMismatch {
            context: "passive_ssl_oracle",
            expected: state.n(),
            found: layout.total(),
        });
    }
    let pair = ssl_pair(layout, state.step).ok_or(PalError::Exhausted)?;
    state.step += 1;
    let n = state.n();
    let rng = state.rng();
    let reg = (0..reg_batch)
        .map(|_| (rng.random_range(0..n), rng.random_range(0..n)))
        .collect();
    Ok(state.issue(
        Query::Pairs {
            pairs: vec![pair],
            auto_positive: true,
        },
        reg,
    ))
}

/// `count` pairs drawn independently and uniformly from `[N]^2`, `i = j`
/// included; the same pairs serve as `J_t`.
pub fn passive_supervised_oracle(state: &mut OracleState, count: usize) -> QueryBatch {
    let n = state.n();
    let rng = state.rng();
    let pairs: Vec<(usize, usize)> = (0..count)
        .map(|_| (rng.random_range(0..n), rng.random_range(0..n)))
        .collect();
    state.issue(
        Query::Pairs {
            pairs: pairs.clone(),
            auto_positive: false,
        },
        pairs,
    )
}
