//! Filling graph entries from class-membership answers.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{EntryState, SimilarityGraph, NEGATIVE, POSITIVE};
use crate::error::{PalError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Member {
    #[default]
    Unknown,
    Yes,
    No,
}

/// N x C table of answers to "does node i belong to class c?".
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Membership {
    n: usize,
    classes: usize,
    cells: Vec<Member>,
}

impl Membership {
    pub fn new(n: usize, classes: usize) -> Self {
        Membership {
            n,
            classes,
            cells: vec![Member::Unknown; n * classes],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, i: usize, c: usize) -> Member {
        self.cells[i * self.classes + c]
    }

    pub fn set(&mut self, i: usize, c: usize, m: Member) -> Result<()> {
        if i >= self.n {
            return Err(PalError::IndexOutOfRange {
                index: i,
                bound: self.n,
            });
        }
        if c >= self.classes {
            return Err(PalError::IndexOutOfRange {
                index: c,
                bound: self.classes,
            });
        }
        self.cells[i * self.classes + c] = m;
        Ok(())
    }

    /// Record a Yes at `c` together with the No it implies everywhere else.
    pub fn confirm(&mut self, i: usize, c: usize) -> Result<()> {
        self.set(i, c, Member::Yes)?;
        for other in (0..self.classes).filter(|&o| o != c) {
            self.cells[i * self.classes + other] = Member::No;
        }
        Ok(())
    }

    pub fn row(&self, i: usize) -> &[Member] {
        &self.cells[i * self.classes..(i + 1) * self.classes]
    }

    /// The class a node was confirmed in, if any.
    pub fn yes_class(&self, i: usize) -> Option<usize> {
        self.row(i).iter().position(|&m| m == Member::Yes)
    }

    pub fn is_determined(&self, i: usize) -> bool {
        self.yes_class(i).is_some()
    }

    pub fn determined_count(&self) -> usize {
        (0..self.n).filter(|&i| self.is_determined(i)).count()
    }

    pub fn yes_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes];
        for i in 0..self.n {
            if let Some(c) = self.yes_class(i) {
                counts[c] += 1;
            }
        }
        counts
    }

    pub fn validate(&self) -> Result<()> {
        for i in 0..self.n {
            if self.row(i).iter().filter(|&&m| m == Member::Yes).count() > 1 {
                return Err(PalError::invalid(format!("row {i} has more than one Yes")));
            }
        }
        Ok(())
    }

    /// Relation between `i` and `j` implied by the table, if any.
    pub fn relation(&self, i: usize, j: usize) -> Option<Relation> {
        match (self.yes_class(i), self.yes_class(j)) {
            (Some(a), Some(b)) => Some(if a == b {
                Relation::Positive
            } else {
                Relation::Negative
            }),
            (Some(a), None) if self.get(j, a) == Member::No => Some(Relation::Negative),
            (None, Some(b)) if self.get(i, b) == Member::No => Some(Relation::Negative),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    Positive,
    Negative,
}

impl Relation {
    pub fn value(self) -> f64 {
        match self {
            Relation::Positive => POSITIVE,
            Relation::Negative => NEGATIVE,
        }
    }

    pub fn of_value(v: f64) -> Self {
        if v > 0.0 {
            Relation::Positive
        } else {
            Relation::Negative
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NewEntry {
    pub i: usize,
    pub j: usize,
    pub relation: Relation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Conflict {
    pub i: usize,
    pub j: usize,
    pub existing: f64,
    pub deduced: Relation,
    /// True when the policy replaced the stored value.
    pub overwritten: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Deduction {
    /// Entries that went from unknown to known, `i <= j`.
    pub new_entries: Vec<NewEntry>,
    pub conflicts: Vec<Conflict>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ConflictPolicy {
    #[default]
    KeepFirst,
    MajorityVote,
}

/// Applies membership deductions to a graph under a conflict policy.
///
/// Under `MajorityVote` every deduction pass casts one vote per derived pair;
/// an entry set elsewhere counts as one vote for its current sign.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Deducer {
    pub policy: ConflictPolicy,
    votes: BTreeMap<(usize, usize), [u32; 2]>,
}

impl Deducer {
    pub fn new(policy: ConflictPolicy) -> Self {
        Deducer {
            policy,
            votes: BTreeMap::new(),
        }
    }

    /// Deduce over every pair.
    pub fn deduce(&mut self, q: &Membership, g: &mut SimilarityGraph) -> Result<Deduction> {
        let all: Vec<usize> = (0..q.n()).collect();
        self.deduce_rows(q, g, &all)
    }

    /// Deduce over pairs touching at least one of `rows`.
    pub fn deduce_rows(
        &mut self,
        q: &Membership,
        g: &mut SimilarityGraph,
        rows: &[usize],
    ) -> Result<Deduction> {
        if q.n() != g.n() {
            return Err(PalError::DimensionMismatch {
                context: "deduce_from_membership",
                expected: g.n(),
                found: q.n(),
            });
        }
        q.validate()?;
        let mut in_rows = vec![false; q.n()];
        for &r in rows {
            if r >= q.n() {
                return Err(PalError::IndexOutOfRange {
                    index: r,
                    bound: q.n(),
                });
            }
            in_rows[r] = true;
        }
        let mut out = Deduction::default();
        for i in 0..q.n() {
            if !in_rows[i] {
                continue;
            }
            for j in 0..q.n() {
                // A pair inside `rows` is handled once, from its smaller index.
                if in_rows[j] && j < i {
                    continue;
                }
                if let Some(rel) = q.relation(i, j) {
                    self.apply(g, i.min(j), i.max(j), rel, &mut out);
                }
            }
        }
        out.new_entries.sort_by_key(|e| (e.i, e.j));
        Ok(out)
    }

    fn apply(&mut self, g: &mut SimilarityGraph, i: usize, j: usize, rel: Relation, out: &mut Deduction) {
        let slot = rel as usize;
        match g.get(i, j) {
            EntryState::Unknown => {
                g.entries.insert((i, j), rel.value());
                out.new_entries.push(NewEntry { i, j, relation: rel });
                if self.policy == ConflictPolicy::MajorityVote {
                    self.votes.entry((i, j)).or_default()[slot] += 1;
                }
            }
            EntryState::Known(existing) => {
                let current = Relation::of_value(existing);
                if self.policy == ConflictPolicy::MajorityVote {
                    let tally = self.votes.entry((i, j)).or_insert_with(|| {
                        let mut t = [0; 2];
                        t[current as usize] = 1;
                        t
                    });
                    tally[slot] += 1;
                }
                if current == rel {
                    return;
                }
                let overwritten = match self.policy {
                    ConflictPolicy::KeepFirst => false,
                    ConflictPolicy::MajorityVote => {
                        let t = self.votes[&(i, j)];
                        t[slot] > t[current as usize]
                    }
                };
                if overwritten {
                    g.entries.insert((i, j), rel.value());
                }
                out.conflicts.push(Conflict {
                    i,
                    j,
                    existing,
                    deduced: rel,
                    overwritten,
                });
            }
        }
    }
}

/// Deduce over every pair with the keep-first policy.
pub fn deduce_from_membership(q: &Membership, g: &mut SimilarityGraph) -> Result<Deduction> {
    Deducer::new(ConflictPolicy::KeepFirst).deduce(q, g)
}
