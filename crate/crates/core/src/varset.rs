use std::fmt;

use serde::{Deserialize, Serialize};

/// A sorted, duplicate-free set of variable indices.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParentSet(Vec<usize>);

impl ParentSet {
    pub fn empty() -> Self {
        ParentSet(Vec::new())
    }

    /// Builds a set from arbitrary indices, sorting and removing duplicates.
    pub fn new(mut vars: Vec<usize>) -> Self {
        vars.sort_unstable();
        vars.dedup();
        ParentSet(vars)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, v: usize) -> bool {
        self.0.binary_search(&v).is_ok()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }

    /// The set with `v` added.
    pub fn with(&self, v: usize) -> ParentSet {
        let mut vars = self.0.clone();
        if let Err(pos) = vars.binary_search(&v) {
            vars.insert(pos, v);
        }
        ParentSet(vars)
    }

    /// The set with `v` removed.
    pub fn without(&self, v: usize) -> ParentSet {
        ParentSet(self.0.iter().copied().filter(|&x| x != v).collect())
    }

    pub fn is_subset_of(&self, other: &ParentSet) -> bool {
        self.0.iter().all(|&v| other.contains(v))
    }

    /// All subsets (including the empty set and the set itself).
    pub fn subsets(&self) -> Vec<ParentSet> {
        let k = self.0.len();
        (0u32..(1u32 << k))
            .map(|mask| {
                ParentSet(
                    (0..k)
                        .filter(|b| mask & (1 << b) != 0)
                        .map(|b| self.0[b])
                        .collect(),
                )
            })
            .collect()
    }
}

impl From<Vec<usize>> for ParentSet {
    fn from(v: Vec<usize>) -> Self {
        ParentSet::new(v)
    }
}

impl fmt::Display for ParentSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, "}}")
    }
}

/// All `k`-element combinations of `items`, in lexicographic order.
pub(crate) fn combinations(items: &[usize], k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(items: &[usize], k: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..items.len() {
            if items.len() - i < k - cur.len() {
                break;
            }
            cur.push(items[i]);
            rec(items, k, i + 1, cur, out);
            cur.pop();
        }
    }
    rec(items, k, 0, &mut cur, &mut out);
    out
}
