//! Model averaging over the structures visited during search.
//!
//! Every assignment the solver visits that violates no hard clause and
//! chooses exactly one family per child is a DAG (with cycle mode none or
//! hard). Those DAGs are collected, deduplicated, truncated to the best
//! `keep_top` by exact score, and renormalized. Structures never visited get
//! probability zero.
//!
//! # Record file
//!
//! ```text
//! # bnsat-records v1
//! # atoms=<atom map digest> n=<variables> records=<count>
//! <rounded cost> <family id for child 0> ... <family id for child n-1>
//! ```

use std::collections::HashSet;
use std::fmt::Write as _;

use thiserror::Error;

use crate::encoder::{Atom, AtomMap, CycleMode, Wcnf};
use crate::solver::{solve_observed, Assignment, SearchObserver, SolveResult, SolverConfig, SolverError};

pub const RECORDS_HEADER: &str = "# bnsat-records v1";
pub const DEFAULT_KEEP_TOP: usize = 1_000_000;
/// Both estimates must exceed this for a parent set to count in the
/// divergence summary.
pub const PRESENCE_FLOOR: f64 = 0.01;
/// Differences above this (between sets present in both runs) count as large.
pub const DEFAULT_DIVERGENCE_THRESHOLD: f64 = 0.1;

#[derive(Debug, Error)]
pub enum BmaError {
    #[error("soft cycle mode lets cyclic structures through; harvest needs cycle mode none or hard")]
    SoftCycle,
    #[error("keep_top must be positive")]
    KeepTop,
    #[error("no records to average")]
    Empty,
    #[error("estimates come from different atom maps")]
    MapMismatch,
    #[error("record line {line}: {msg}")]
    Format { line: usize, msg: String },
    #[error(transparent)]
    Solver(#[from] SolverError),
}

/// One distinct feasible structure: a family atom id per child.
#[derive(Clone, Debug, PartialEq)]
pub struct SearchRecord {
    pub family_ids: Vec<u32>,
    pub score: f64,
    pub cost: u64,
}

impl SearchRecord {
    pub fn from_ids(family_ids: Vec<u32>, map: &AtomMap) -> Self {
        let (mut score, mut cost) = (0.0, 0);
        for &id in &family_ids {
            let (_, _, s, w) = map.family(id).expect("family atom");
            score += s;
            cost += w;
        }
        SearchRecord { family_ids, score, cost }
    }
}

/// Tracks, per child, how many family atoms are true and the sum of their
/// ids; when every count is 1 the sums are the chosen ids.
struct Harvester<'a> {
    child_of: &'a [Option<u32>],
    count: Vec<u32>,
    id_sum: Vec<u32>,
    off: usize,
    seen: HashSet<Vec<u32>>,
}

impl<'a> Harvester<'a> {
    fn new(child_of: &'a [Option<u32>], n: usize) -> Self {
        Harvester { child_of, count: vec![0; n], id_sum: vec![0; n], off: n, seen: HashSet::new() }
    }
}

impl SearchObserver for Harvester<'_> {
    fn start(&mut self, assignment: &Assignment) {
        self.count.iter_mut().for_each(|c| *c = 0);
        self.id_sum.iter_mut().for_each(|c| *c = 0);
        for id in assignment.true_atoms() {
            if let Some(c) = self.child_of[id as usize] {
                self.count[c as usize] += 1;
                self.id_sum[c as usize] += id;
            }
        }
        self.off = self.count.iter().filter(|&&c| c != 1).count();
    }

    fn flipped(&mut self, atom: u32, value: bool) {
        let Some(c) = self.child_of[atom as usize] else { return };
        let c = c as usize;
        let was_one = self.count[c] == 1;
        if value {
            self.count[c] += 1;
            self.id_sum[c] += atom;
        } else {
            self.count[c] -= 1;
            self.id_sum[c] -= atom;
        }
        match (was_one, self.count[c] == 1) {
            (true, false) => self.off += 1,
            (false, true) => self.off -= 1,
            _ => {}
        }
    }

    fn feasible(&mut self, _: &Assignment, _: u64) {
        if self.off == 0 && !self.seen.contains(self.id_sum.as_slice()) {
            self.seen.insert(self.id_sum.clone());
        }
    }
}

pub struct Harvest {
    /// Best first, at most `keep_top`.
    pub records: Vec<SearchRecord>,
    /// Distinct structures seen before truncation.
    pub distinct: usize,
    pub solve: SolveResult,
}

/// Runs the solver and collects every distinct feasible structure it visits.
pub fn harvest(problem: &Wcnf, map: &AtomMap, config: &SolverConfig, keep_top: usize) -> Result<Harvest, BmaError> {
    if matches!(map.cycle(), CycleMode::Soft(_)) {
        return Err(BmaError::SoftCycle);
    }
    if keep_top == 0 {
        return Err(BmaError::KeepTop);
    }
    let mut child_of = vec![None; map.num_atoms() + 1];
    for (id, atom) in map.atoms() {
        if let Atom::Family { child, .. } = atom {
            child_of[id as usize] = Some(*child as u32);
        }
    }
    let n = map.num_variables();
    let (solve, observers) = solve_observed(problem, config, |_| Harvester::new(&child_of, n))?;
    let mut all: HashSet<Vec<u32>> = HashSet::new();
    for o in observers {
        all.extend(o.seen);
    }
    let distinct = all.len();
    let mut records: Vec<SearchRecord> = all.into_iter().map(|ids| SearchRecord::from_ids(ids, map)).collect();
    sort_records(&mut records);
    records.truncate(keep_top);
    Ok(Harvest { records, distinct, solve })
}

/// Best score first; ties by id vector so the order is reproducible.
pub fn sort_records(records: &mut [SearchRecord]) {
    records.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.family_ids.cmp(&b.family_ids)));
}

/// Natural log of Σ exp(x), stable for large magnitudes.
pub fn log_sum_exp(xs: impl IntoIterator<Item = f64> + Clone) -> f64 {
    let m = xs.clone().into_iter().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.into_iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Posterior probability of every candidate parent set.
#[derive(Clone, Debug, PartialEq)]
pub struct PosteriorEstimate {
    map_digest: String,
    /// per child: (family id, probability) for every candidate, in map order
    probs: Vec<Vec<(u32, f64)>>,
    support: usize,
    log_normalizer: f64,
}

impl PosteriorEstimate {
    pub fn map_digest(&self) -> &str {
        &self.map_digest
    }

    /// Number of structures averaged over.
    pub fn support(&self) -> usize {
        self.support
    }

    pub fn log_normalizer(&self) -> f64 {
        self.log_normalizer
    }

    pub fn child(&self, child: usize) -> &[(u32, f64)] {
        &self.probs[child]
    }

    pub fn num_children(&self) -> usize {
        self.probs.len()
    }

    pub fn probability(&self, family_id: u32) -> Option<f64> {
        self.probs.iter().flatten().find(|(id, _)| *id == family_id).map(|(_, p)| *p)
    }

    /// `child<TAB>parents<TAB>probability`, one line per candidate.
    pub fn to_text(&self, map: &AtomMap) -> String {
        let mut s = String::new();
        writeln!(s, "# bnsat-posterior v1").unwrap();
        writeln!(s, "# atoms={} support={} log_normalizer={}", self.map_digest, self.support, self.log_normalizer)
            .unwrap();
        let name = |i: usize| map.variables()[i].name.as_str();
        for per_child in &self.probs {
            for &(id, p) in per_child {
                let (child, pa, _, _) = map.family(id).expect("family atom");
                let ps: Vec<&str> = pa.iter().map(name).collect();
                writeln!(s, "{}\t{}\t{}", name(child), ps.join(","), p).unwrap();
            }
        }
        s
    }
}

pub fn estimate(records: &[SearchRecord], map: &AtomMap) -> Result<PosteriorEstimate, BmaError> {
    if records.is_empty() {
        return Err(BmaError::Empty);
    }
    let log_normalizer = log_sum_exp(records.iter().map(|r| r.score));
    let mut probs: Vec<Vec<(u32, f64)>> =
        (0..map.num_variables()).map(|c| map.family_ids(c).iter().map(|&id| (id, 0.0)).collect()).collect();
    for r in records {
        let w = (r.score - log_normalizer).exp();
        for (child, &id) in r.family_ids.iter().enumerate() {
            let slot = probs[child].iter_mut().find(|(f, _)| *f == id).expect("id belongs to child");
            slot.1 += w;
        }
    }
    Ok(PosteriorEstimate { map_digest: map.digest(), probs, support: records.len(), log_normalizer })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Divergence {
    /// (family id, p_a, p_b) for every candidate parent set
    pub pairs: Vec<(u32, f64, f64)>,
    pub max_diff: f64,
    /// max |p_a - p_b| over sets where both exceed the presence floor
    pub max_diff_present: f64,
    /// sets where both exceed the presence floor and differ by more than the threshold
    pub large: usize,
    pub threshold: f64,
}

impl Divergence {
    /// Two whitespace-separated columns, one candidate per line.
    pub fn scatter_text(&self) -> String {
        let mut s = String::from("# p_a p_b\n");
        for &(_, a, b) in &self.pairs {
            writeln!(s, "{a} {b}").unwrap();
        }
        s
    }
}

pub fn compare_runs(a: &PosteriorEstimate, b: &PosteriorEstimate, threshold: f64) -> Result<Divergence, BmaError> {
    if a.map_digest != b.map_digest || a.probs.len() != b.probs.len() {
        return Err(BmaError::MapMismatch);
    }
    let mut pairs = Vec::new();
    let (mut max_diff, mut max_diff_present, mut large) = (0.0f64, 0.0f64, 0);
    for (ca, cb) in a.probs.iter().zip(&b.probs) {
        for (&(id, pa), &(id_b, pb)) in ca.iter().zip(cb) {
            debug_assert_eq!(id, id_b);
            let d = (pa - pb).abs();
            max_diff = max_diff.max(d);
            if pa > PRESENCE_FLOOR && pb > PRESENCE_FLOOR {
                max_diff_present = max_diff_present.max(d);
                if d > threshold {
                    large += 1;
                }
            }
            pairs.push((id, pa, pb));
        }
    }
    Ok(Divergence { pairs, max_diff, max_diff_present, large, threshold })
}

pub fn records_to_text(records: &[SearchRecord], map: &AtomMap) -> String {
    let mut s = String::new();
    writeln!(s, "{RECORDS_HEADER}").unwrap();
    writeln!(s, "# atoms={} n={} records={}", map.digest(), map.num_variables(), records.len()).unwrap();
    for r in records {
        write!(s, "{}", r.cost).unwrap();
        for id in &r.family_ids {
            write!(s, " {id}").unwrap();
        }
        s.push('\n');
    }
    s
}

/// Reads a record file; exact scores come from `map`.
pub fn records_from_text(text: &str, map: &AtomMap) -> Result<Vec<SearchRecord>, BmaError> {
    let ferr = |line: usize, msg: String| BmaError::Format { line, msg };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, l)) if l.trim_end() == RECORDS_HEADER => {}
        _ => return Err(ferr(1, "missing header".into())),
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        if let Some(rest) = line.strip_prefix('#') {
            if let Some(d) = rest.split_whitespace().find_map(|kv| kv.strip_prefix("atoms=")) {
                if d != map.digest() {
                    return Err(BmaError::MapMismatch);
                }
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let nums: Vec<u64> = line
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| ferr(i + 1, format!("bad number `{t}`"))))
            .collect::<Result<_, _>>()?;
        if nums.len() != map.num_variables() + 1 {
            return Err(ferr(i + 1, format!("expected {} ids", map.num_variables())));
        }
        let ids: Vec<u32> = nums[1..].iter().map(|&x| x as u32).collect();
        for (child, &id) in ids.iter().enumerate() {
            if !map.family_ids(child).contains(&id) {
                return Err(ferr(i + 1, format!("atom {id} is not a family of child {child}")));
            }
        }
        let r = SearchRecord::from_ids(ids, map);
        if r.cost != nums[0] {
            return Err(ferr(i + 1, format!("cost {} disagrees with atom map ({})", nums[0], r.cost)));
        }
        out.push(r);
    }
    Ok(out)
}
