//! Exact log BDeu family scores.
//!
//! For a variable subset X with q_X joint instantiations and counts n_l,
//!
//! ```text
//! log H(X) = sum_l [ lgamma(n_l + alpha/q_X) - lgamma(alpha/q_X) ]
//! ```
//!
//! and the log family score of child i with parents Pa is
//! `log H(Pa ∪ {i}) - log H(Pa)`. Zero-count cells contribute nothing, but
//! q_X always counts every cell allowed by the declared arities.
//!
//! # Score-table text format
//!
//! ```text
//! # bnsat-scores v1
//! # alpha=<a> max_parents=<k> pruned=<bool> data=<digest>
//! # variable <name> <label> ...
//! <child><TAB><parent>,<parent>,...<TAB><log score>
//! ```
//!
//! Parents are listed in variable order; the field is empty for the empty
//! set. Scores are printed with Rust's shortest round-trip float format.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use rayon::prelude::*;
use thiserror::Error;

use crate::bif::VariableDecl;
use crate::dataset::{DataError, Dataset};
use crate::digest::digest_text;
use crate::varset::combinations;
use crate::ParentSet;

pub const SCORES_HEADER: &str = "# bnsat-scores v1";

#[derive(Debug, Error)]
pub enum ScoringError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("parent cap {cap} must be below the number of variables ({n})")]
    CapTooLarge { cap: usize, n: usize },
    #[error("prior precision must be positive and finite, got {0}")]
    InvalidAlpha(f64),
    #[error("child {child} listed among its own parents")]
    ChildInParents { child: usize },
    #[error("score table line {line}: {msg}")]
    Format { line: usize, msg: String },
}

#[inline]
pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

/// log H of `subset` with prior precision `alpha`.
pub fn log_h(data: &Dataset, subset: &[usize], alpha: f64) -> Result<f64, DataError> {
    let table = data.project(subset)?;
    let a = alpha / table.num_cells_possible() as f64;
    let base = ln_gamma(a);
    Ok(table.counts().map(|n| ln_gamma(n as f64 + a) - base).sum())
}

/// Log BDeu family score evaluated cell by cell over parent
/// configurations, without the H decomposition.
pub fn family_score_direct(
    data: &Dataset,
    child: usize,
    parents: &ParentSet,
    alpha: f64,
) -> Result<f64, ScoringError> {
    if parents.contains(child) {
        return Err(ScoringError::ChildInParents { child });
    }
    let mut vars: Vec<usize> = parents.as_slice().to_vec();
    vars.push(child);
    let joint = data.project(&vars)?;
    let r = data.schema()[child].arity() as u64;
    let q = joint.num_cells_possible() / r;
    let a_ij = alpha / q as f64;
    let a_ijk = alpha / (q * r) as f64;
    // n_ij per parent configuration: the child is the last (fastest) digit
    let mut n_ij: BTreeMap<Vec<u32>, u64> = BTreeMap::new();
    let mut score = 0.0;
    for (values, n) in joint.cells() {
        *n_ij.entry(values[..values.len() - 1].to_vec()).or_insert(0) += n;
        score += ln_gamma(n as f64 + a_ijk) - ln_gamma(a_ijk);
    }
    for &n in n_ij.values() {
        score += ln_gamma(a_ij) - ln_gamma(n as f64 + a_ij);
    }
    Ok(score)
}

/// Memo of log H values for one dataset and prior precision.
#[derive(Clone, Debug)]
pub struct HCache {
    alpha: f64,
    values: HashMap<ParentSet, f64>,
}

impl HCache {
    pub fn new(alpha: f64) -> Self {
        HCache { alpha, values: HashMap::new() }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, set: &ParentSet) -> Option<f64> {
        self.values.get(set).copied()
    }

    /// Computes and stores log H(set) unless already present.
    pub fn get_or_compute(&mut self, data: &Dataset, set: &ParentSet) -> Result<f64, DataError> {
        if let Some(v) = self.values.get(set) {
            return Ok(*v);
        }
        let v = log_h(data, set.as_slice(), self.alpha)?;
        self.values.insert(set.clone(), v);
        Ok(v)
    }
}

/// Family scoring against one dataset with a shared H cache.
pub struct Scorer<'a> {
    data: &'a Dataset,
    cache: HCache,
}

impl<'a> Scorer<'a> {
    pub fn new(data: &'a Dataset, alpha: f64) -> Result<Self, ScoringError> {
        check_alpha(alpha)?;
        Ok(Scorer { data, cache: HCache::new(alpha) })
    }

    pub fn family_score(&mut self, child: usize, parents: &ParentSet) -> Result<f64, ScoringError> {
        if parents.contains(child) {
            return Err(ScoringError::ChildInParents { child });
        }
        let fa = parents.with(child);
        Ok(self.cache.get_or_compute(self.data, &fa)? - self.cache.get_or_compute(self.data, parents)?)
    }

    pub fn cache(&self) -> &HCache {
        &self.cache
    }
}

/// One-off log family score via the H decomposition.
pub fn family_score(data: &Dataset, child: usize, parents: &ParentSet, alpha: f64) -> Result<f64, ScoringError> {
    Scorer::new(data, alpha)?.family_score(child, parents)
}

fn check_alpha(alpha: f64) -> Result<(), ScoringError> {
    if alpha > 0.0 && alpha.is_finite() {
        Ok(())
    } else {
        Err(ScoringError::InvalidAlpha(alpha))
    }
}

/// Per-child map from candidate parent set to exact log score.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreTable {
    alpha: f64,
    max_parents: usize,
    variables: Vec<VariableDecl>,
    data_digest: String,
    pruned: bool,
    entries: Vec<Vec<(ParentSet, f64)>>,
}

impl ScoreTable {
    /// Assembles a table; entries are kept in the given order.
    pub fn new(
        alpha: f64,
        max_parents: usize,
        variables: Vec<VariableDecl>,
        data_digest: String,
        pruned: bool,
        entries: Vec<Vec<(ParentSet, f64)>>,
    ) -> Self {
        assert_eq!(variables.len(), entries.len(), "one entry list per variable");
        ScoreTable { alpha, max_parents, variables, data_digest, pruned, entries }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn max_parents(&self) -> usize {
        self.max_parents
    }

    pub fn variables(&self) -> &[VariableDecl] {
        &self.variables
    }

    pub fn num_variables(&self) -> usize {
        self.variables.len()
    }

    pub fn data_digest(&self) -> &str {
        &self.data_digest
    }

    pub fn is_pruned(&self) -> bool {
        self.pruned
    }

    pub fn entries(&self, child: usize) -> impl Iterator<Item = (&ParentSet, f64)> {
        self.entries[child].iter().map(|(p, s)| (p, *s))
    }

    pub fn num_entries(&self, child: usize) -> usize {
        self.entries[child].len()
    }

    /// Total number of (child, parent set) scores.
    pub fn len(&self) -> usize {
        self.entries.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn score(&self, child: usize, parents: &ParentSet) -> Option<f64> {
        self.entries[child].iter().find(|(p, _)| p == parents).map(|(_, s)| *s)
    }

    pub(crate) fn with_entries(&self, entries: Vec<Vec<(ParentSet, f64)>>, pruned: bool) -> ScoreTable {
        ScoreTable { entries, pruned, ..self.clone() }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(SCORES_HEADER);
        out.push('\n');
        writeln!(
            out,
            "# alpha={} max_parents={} pruned={} data={}",
            self.alpha, self.max_parents, self.pruned, self.data_digest
        )
        .unwrap();
        for v in &self.variables {
            write!(out, "# variable {}", v.name).unwrap();
            for l in &v.values {
                write!(out, " {l}").unwrap();
            }
            out.push('\n');
        }
        for (child, list) in self.entries.iter().enumerate() {
            for (pa, s) in list {
                let names: Vec<&str> = pa.iter().map(|p| self.variables[p].name.as_str()).collect();
                writeln!(out, "{}\t{}\t{}", self.variables[child].name, names.join(","), s).unwrap();
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, ScoringError> {
        let ferr = |line: usize, msg: String| ScoringError::Format { line, msg };
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, l)) if l.trim_end() == SCORES_HEADER => {}
            _ => return Err(ferr(1, format!("expected `{SCORES_HEADER}`"))),
        }
        let (alpha, max_parents, pruned, data_digest) = match lines.next() {
            Some((i, l)) => {
                let mut alpha = None;
                let mut cap = None;
                let mut pruned = None;
                let mut digest = None;
                for kv in l.trim_start_matches('#').split_whitespace() {
                    match kv.split_once('=') {
                        Some(("alpha", v)) => alpha = v.parse::<f64>().ok(),
                        Some(("max_parents", v)) => cap = v.parse::<usize>().ok(),
                        Some(("pruned", v)) => pruned = v.parse::<bool>().ok(),
                        Some(("data", v)) => digest = Some(v.to_string()),
                        _ => {}
                    }
                }
                match (alpha, cap, pruned, digest) {
                    (Some(a), Some(c), Some(p), Some(d)) => (a, c, p, d),
                    _ => return Err(ferr(i + 1, "incomplete parameter line".into())),
                }
            }
            None => return Err(ferr(2, "missing parameter line".into())),
        };
        let mut variables = Vec::new();
        let mut entries: Vec<Vec<(ParentSet, f64)>> = Vec::new();
        let mut index: HashMap<String, usize> = HashMap::new();
        for (i, line) in lines {
            let line_no = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("# variable ") {
                let mut parts = rest.split_whitespace();
                let name = parts.next().ok_or_else(|| ferr(line_no, "missing name".into()))?;
                index.insert(name.to_string(), variables.len());
                variables.push(VariableDecl::new(name, parts.map(str::to_string).collect()));
                entries.push(Vec::new());
                continue;
            }
            if line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(ferr(line_no, "expected three tab-separated fields".into()));
            }
            let lookup = |n: &str| index.get(n).copied().ok_or_else(|| ferr(line_no, format!("unknown variable `{n}`")));
            let child = lookup(fields[0])?;
            let parents = if fields[1].is_empty() {
                ParentSet::empty()
            } else {
                ParentSet::new(fields[1].split(',').map(lookup).collect::<Result<Vec<_>, _>>()?)
            };
            let score: f64 = fields[2].parse().map_err(|_| ferr(line_no, format!("bad score `{}`", fields[2])))?;
            if parents.contains(child) {
                return Err(ScoringError::ChildInParents { child });
            }
            entries[child].push((parents, score));
        }
        Ok(ScoreTable { alpha, max_parents, variables, data_digest, pruned, entries })
    }

    pub fn digest(&self) -> String {
        digest_text(&self.to_text())
    }
}

/// Scores every parent set of size at most `max_parents` for every child.
///
/// log H is computed once per subset of size up to `max_parents + 1`, in
/// parallel; the result does not depend on scheduling. Entries for each
/// child are ordered by size, then lexicographically.
pub fn enumerate_scores(data: &Dataset, max_parents: usize, alpha: f64) -> Result<ScoreTable, ScoringError> {
    check_alpha(alpha)?;
    let n = data.num_variables();
    if n > 0 && max_parents >= n {
        return Err(ScoringError::CapTooLarge { cap: max_parents, n });
    }
    let all: Vec<usize> = (0..n).collect();
    let subsets: Vec<Vec<usize>> = (0..=(max_parents + 1).min(n))
        .flat_map(|k| combinations(&all, k))
        .collect();
    let values: Vec<f64> = subsets
        .par_iter()
        .map(|s| log_h(data, s, alpha))
        .collect::<Result<_, _>>()?;
    let h: HashMap<&[usize], f64> = subsets.iter().map(Vec::as_slice).zip(values).collect();

    let entries = (0..n)
        .map(|child| {
            let others: Vec<usize> = all.iter().copied().filter(|&v| v != child).collect();
            (0..=max_parents)
                .flat_map(|k| combinations(&others, k))
                .map(|pa| {
                    let fa = ParentSet::new(pa.clone()).with(child);
                    let s = h[fa.as_slice()] - h[pa.as_slice()];
                    (ParentSet::new(pa), s)
                })
                .collect()
        })
        .collect();
    Ok(ScoreTable::new(alpha, max_parents, data.schema().to_vec(), data.digest(), false, entries))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binary_data(counts: &[(&[u32], u64)], n: usize) -> Dataset {
        let schema = (0..n).map(|i| VariableDecl::with_arity(format!("v{i}"), 2)).collect();
        let mut d = Dataset::empty(schema).unwrap();
        for (vals, c) in counts {
            d.add(vals, *c).unwrap();
        }
        d
    }

    #[test]
    fn empty_data_scores_zero() {
        let d = binary_data(&[], 3);
        assert_eq!(log_h(&d, &[0, 2], 1.0).unwrap(), 0.0);
        let t = enumerate_scores(&d, 2, 1.0).unwrap();
        for c in 0..3 {
            assert!(t.entries(c).all(|(_, s)| s == 0.0));
        }
    }

    #[test]
    fn scores_are_bitwise_reproducible() {
        let rows: Vec<Vec<u32>> = (0..64u32).map(|k| (0..6).map(|b| k >> b & 1).collect()).collect();
        let counts: Vec<(&[u32], u64)> = rows.iter().enumerate().map(|(i, r)| (r.as_slice(), 1 + i as u64 % 7)).collect();
        let d = binary_data(&counts, 6);
        let first = enumerate_scores(&d, 3, 1.0).unwrap().to_text();
        for _ in 0..5 {
            assert_eq!(enumerate_scores(&d, 3, 1.0).unwrap().to_text(), first);
        }
    }

    #[test]
    fn log_h_of_empty_subset() {
        let d = binary_data(&[(&[0], 4)], 1);
        assert!((log_h(&d, &[], 1.0).unwrap() - 24f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn log_h_half_integer_case() {
        let d = binary_data(&[(&[0], 3), (&[1], 1)], 1);
        let expected = 1.875f64.ln() + 0.5f64.ln();
        assert!((log_h(&d, &[0], 1.0).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn family_score_routes_agree() {
        let d = binary_data(&[(&[0, 0, 1], 5), (&[1, 0, 1], 2), (&[1, 1, 0], 7), (&[0, 1, 1], 1)], 3);
        for child in 0..3 {
            for pa in [vec![], vec![(child + 1) % 3], vec![(child + 1) % 3, (child + 2) % 3]] {
                let pa = ParentSet::new(pa);
                let a = family_score(&d, child, &pa, 1.0).unwrap();
                let b = family_score_direct(&d, child, &pa, 1.0).unwrap();
                assert!((a - b).abs() < 1e-9, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn unobserved_values_still_count_in_q() {
        // arity 3 declared, only one value seen
        let schema = vec![VariableDecl::with_arity("x", 3)];
        let mut d = Dataset::empty(schema).unwrap();
        d.add(&[0], 2).unwrap();
        let a = 1.0 / 3.0;
        let expected = ln_gamma(2.0 + a) - ln_gamma(a) - (ln_gamma(3.0) - ln_gamma(1.0));
        let got = family_score(&d, 0, &ParentSet::empty(), 1.0).unwrap();
        assert!((got - expected).abs() < 1e-12);
    }

    #[test]
    fn counts_match_combinatorics() {
        let d = binary_data(&[(&[0, 1], 1)], 2);
        assert_eq!(enumerate_scores(&d, 1, 1.0).unwrap().len(), 4);
        assert!(matches!(enumerate_scores(&d, 2, 1.0), Err(ScoringError::CapTooLarge { .. })));
    }

    #[test]
    fn rejects_bad_alpha_and_self_parent() {
        let d = binary_data(&[(&[0, 1], 1)], 2);
        assert!(matches!(enumerate_scores(&d, 1, 0.0), Err(ScoringError::InvalidAlpha(_))));
        assert!(matches!(
            family_score(&d, 0, &ParentSet::new(vec![0]), 1.0),
            Err(ScoringError::ChildInParents { child: 0 })
        ));
    }

    #[test]
    fn h_cache_is_shared() {
        let d = binary_data(&[(&[0, 1, 1], 3), (&[1, 1, 0], 2)], 3);
        let mut s = Scorer::new(&d, 1.0).unwrap();
        s.family_score(0, &ParentSet::new(vec![1])).unwrap();
        s.family_score(1, &ParentSet::new(vec![0])).unwrap();
        // {1}, {0,1}, {0}
        assert_eq!(s.cache().len(), 3);
    }

    #[test]
    fn text_roundtrip() {
        let d = binary_data(&[(&[0, 1, 1], 3), (&[1, 1, 0], 2), (&[1, 0, 0], 9)], 3);
        let t = enumerate_scores(&d, 2, 1.0).unwrap();
        let back = ScoreTable::from_text(&t.to_text()).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.digest(), t.digest());
    }
}
