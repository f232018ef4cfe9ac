//! Subset-dominance filtering of candidate parent sets.
//!
//! A parent set is dropped when some strict subset of it scores higher:
//! swapping in the subset only removes arcs, so it can never create a cycle
//! and never lowers the best achievable score.

use std::collections::HashMap;

use thiserror::Error;

use crate::scoring::ScoreTable;
use crate::ParentSet;

#[derive(Debug, Error)]
pub enum PruneError {
    #[error("score table is incomplete: `{child}` lacks subset {missing} of a scored parent set")]
    IncompleteTable { child: String, missing: ParentSet },
}

/// When a subset with an *equal* score dominates.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum TieRule {
    /// Drop only when a subset scores strictly higher.
    #[default]
    Strict,
    /// Also drop when a subset scores equally well.
    NonStrict,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PrunedScoreTable {
    table: ScoreTable,
    kept: Vec<usize>,
    dropped: Vec<usize>,
}

impl PrunedScoreTable {
    pub fn table(&self) -> &ScoreTable {
        &self.table
    }

    pub fn into_table(self) -> ScoreTable {
        self.table
    }

    pub fn kept(&self, child: usize) -> usize {
        self.kept[child]
    }

    pub fn dropped(&self, child: usize) -> usize {
        self.dropped[child]
    }

    /// Total kept parent sets over all children.
    pub fn total_kept(&self) -> usize {
        self.kept.iter().sum()
    }

    /// Largest per-child kept count.
    pub fn max_kept(&self) -> usize {
        self.kept.iter().copied().max().unwrap_or(0)
    }
}

pub fn prune(scores: &ScoreTable) -> Result<PrunedScoreTable, PruneError> {
    prune_with(scores, TieRule::Strict)
}

pub fn prune_with(scores: &ScoreTable, rule: TieRule) -> Result<PrunedScoreTable, PruneError> {
    let n = scores.num_variables();
    let mut entries = Vec::with_capacity(n);
    let mut kept = Vec::with_capacity(n);
    let mut dropped = Vec::with_capacity(n);
    for child in 0..n {
        let score: HashMap<&ParentSet, f64> = scores.entries(child).collect();
        let mut order: Vec<&ParentSet> = score.keys().copied().collect();
        order.sort_by_key(|p| (p.len(), (*p).clone()));
        // best score among strict subsets, filled in by increasing size
        let mut best_sub: HashMap<&ParentSet, f64> = HashMap::new();
        for pa in order {
            let mut best = f64::NEG_INFINITY;
            for v in pa.iter() {
                let sub = pa.without(v);
                let (&key, &s) = score.get_key_value(&sub).ok_or_else(|| PruneError::IncompleteTable {
                    child: scores.variables()[child].name.clone(),
                    missing: sub.clone(),
                })?;
                best = best.max(s).max(best_sub[key]);
            }
            best_sub.insert(pa, best);
        }
        let list: Vec<(ParentSet, f64)> = scores
            .entries(child)
            .filter(|(pa, s)| {
                let b = best_sub[pa];
                match rule {
                    TieRule::Strict => b <= *s,
                    TieRule::NonStrict => b < *s,
                }
            })
            .map(|(pa, s)| (pa.clone(), s))
            .collect();
        kept.push(list.len());
        dropped.push(scores.num_entries(child) - list.len());
        entries.push(list);
    }
    Ok(PrunedScoreTable { table: scores.with_entries(entries, true), kept, dropped })
}
