use super::{OracleState, Query, QueryBatch};
use crate::error::{PalError, Result};
use crate::linalg::squared_distance;

/// Positive `(nn(j), j)` for every `j` in `minibatch`, where `nn(j)` is the
/// nearest other member in the embedding snapshot. Ties go to the lowest index.
pub fn nnclr_oracle(state: &mut OracleState, minibatch: &[usize]) -> Result<QueryBatch> {
    let z = state.embedding_snapshot.as_ref().ok_or(PalError::MissingSnapshot)?;
    if minibatch.len() < 2 {
        return Err(PalError::invalid("nnclr minibatch needs at least 2 members"));
    }
    if let Some(&bad) = minibatch.iter().find(|&&i| i >= z.n()) {
        return Err(PalError::IndexOutOfRange {
            index: bad,
            bound: z.n(),
        });
    }
    let rows: Vec<Vec<f64>> = minibatch.iter().map(|&i| z.row(i)).collect();
    let mut pairs = Vec::with_capacity(minibatch.len());
    for (a, &j) in minibatch.iter().enumerate() {
        let mut best: Option<(f64, usize)> = None;
        for (b, &k) in minibatch.iter().enumerate() {
            if a == b || k == j {
                continue;
            }
            let d = squared_distance(&rows[b], &rows[a]);
            let better = match best {
                None => true,
                Some((bd, bk)) => d < bd || (d == bd && k < bk),
            };
            if better {
                best = Some((d, k));
            }
        }
        let (_, nn) = best.ok_or_else(|| PalError::invalid("nnclr minibatch has no distinct neighbour"))?;
        pairs.push((nn, j));
    }
    Ok(state.issue(
        Query::Pairs {
            pairs: pairs.clone(),
            auto_positive: true,
        },
        pairs,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::EntryState;
    use crate::losses::Embedding;

    fn state(rows: &[f64]) -> OracleState {
        let mut s = OracleState::new(rows.len(), 1, 0);
        s.embedding_snapshot = Some(Embedding::from_rows(&rows.iter().map(|&v| vec![v]).collect::<Vec<_>>()).unwrap());
        s
    }

    fn pairs(b: &QueryBatch) -> Vec<(usize, usize)> {
        match &b.query {
            Query::Pairs { pairs, auto_positive } => {
                assert!(auto_positive);
                pairs.clone()
            }
            _ => panic!("expected pairs"),
        }
    }

    #[test]
    fn two_members_pair_up() {
        let mut s = state(&[0.0, 100.0]);
        assert_eq!(pairs(&nnclr_oracle(&mut s, &[0, 1]).unwrap()), vec![(1, 0), (0, 1)]);
    }

    #[test]
    fn distance_table() {
        let mut s = state(&[0.0, 0.1, 5.0]);
        let b = nnclr_oracle(&mut s, &[0, 1, 2]).unwrap();
        assert_eq!(pairs(&b), vec![(1, 0), (0, 1), (1, 2)]);
        let a = b.auto_answers().unwrap();
        s.ingest(&b, &a).unwrap();
        assert_eq!(s.graph.get(2, 1), EntryState::Known(1.0));
        assert_eq!(s.graph.get(0, 2), EntryState::Unknown);
    }

    #[test]
    fn duplicates_take_lowest_index() {
        let mut s = state(&[1.0, 1.0, 1.0, 3.0]);
        assert_eq!(pairs(&nnclr_oracle(&mut s, &[3, 2, 1, 0]).unwrap()), vec![(0, 3), (0, 2), (0, 1), (1, 0)]);
    }

    #[test]
    fn errors() {
        let mut s = OracleState::new(3, 1, 0);
        assert_eq!(nnclr_oracle(&mut s, &[0, 1]), Err(PalError::MissingSnapshot));
        let mut s = state(&[0.0, 1.0]);
        assert!(nnclr_oracle(&mut s, &[0]).is_err());
        assert!(nnclr_oracle(&mut s, &[0, 5]).is_err());
    }
}
