//! Compiles a score table into weighted CNF.
//!
//! Each candidate (child, parent set) pair becomes a *family atom*. Clauses,
//! in emission order:
//!
//! 1. per child, one hard clause: the disjunction of its family atoms;
//! 2. per family atom, a soft unit `¬family` weighted by the rounded
//!    negated log score (weight-0 units are omitted);
//! 3. hard linking clauses `family -> arc-witness`, one per parent;
//! 4. the acyclicity structure:
//!    * **ancestor**: `an(i,j)` atoms for ordered pairs, a transitivity
//!      clause per ordered triple, and per unordered pair either a hard
//!      2-cycle ban or an implication into a single `cycle` atom whose
//!      negation is a hard or soft unit;
//!    * **order**: `ord(i,j)` atoms for `i < j` (declaration order) read as
//!      "i precedes j", and a transitivity clause per ordered triple. The
//!      precedence relation is a tournament, so excluding 3-cycles excludes
//!      all cycles.
//!
//! No at-most-one-family constraint is emitted: choosing two parent sets
//! for a child only adds cost.
//!
//! # Atom-map sidecar format
//!
//! ```text
//! # bnsat-atoms v1
//! # encoding=<ancestor|order> cycle=<none|hard|soft:W> scores=<d> data=<d> wcnf=<d> order=declaration
//! # clauses must_have=.. soft=.. linking=.. transitivity=.. acyclicity=.. cycle_unit=..
//! # variable <name> <label> ...
//! <id><TAB>family<TAB><child><TAB><parents,...><TAB><log score><TAB><weight>
//! <id><TAB>anc<TAB><from><TAB><to>
//! <id><TAB>ord<TAB><first><TAB><second>
//! <id><TAB>cycle
//! ```

use std::collections::HashMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use thiserror::Error;

use crate::bif::VariableDecl;
use crate::digest::digest_text;
use crate::scoring::ScoreTable;
use crate::ParentSet;

pub const ATOMS_HEADER: &str = "# bnsat-atoms v1";

#[derive(Debug, Error)]
pub enum EncodeError {
    #[error("score table has no variables")]
    EmptyTable,
    #[error("variable `{0}` has no candidate parent sets")]
    EmptyCandidates(String),
    #[error("invalid log score {score} for `{child}`")]
    InvalidScore { child: String, score: f64 },
    #[error("clause weights overflow 64 bits")]
    WeightOverflow,
    #[error("a cycle atom is only available with the ancestor encoding")]
    CycleAtomNeedsAncestor,
}

#[derive(Debug, Error)]
pub enum WcnfError {
    #[error("line {line}: malformed header: {msg}")]
    Header { line: usize, msg: String },
    #[error("line {line}: literal {lit} out of range (1..={atoms})")]
    LiteralOutOfRange { line: usize, lit: i64, atoms: usize },
    #[error("line {line}: {msg}")]
    Malformed { line: usize, msg: String },
    #[error("clause {0} is missing its terminating 0")]
    MissingTerminator(usize),
    #[error("header announces {expected} clauses, found {found}")]
    ClauseCount { expected: usize, found: usize },
    #[error("clause weights overflow 64 bits")]
    WeightOverflow,
}

#[derive(Debug, Error)]
pub enum AtomMapError {
    #[error("atom map line {line}: {msg}")]
    Format { line: usize, msg: String },
}

/// How acyclicity is enforced.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EncodingMode {
    Ancestor,
    Order,
}

impl fmt::Display for EncodingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EncodingMode::Ancestor => "ancestor",
            EncodingMode::Order => "order",
        })
    }
}

impl FromStr for EncodingMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "ancestor" => Ok(EncodingMode::Ancestor),
            "order" | "total-order" => Ok(EncodingMode::Order),
            _ => Err(format!("unknown encoding `{s}`")),
        }
    }
}

/// Whether 2-cycles of ancestor atoms are banned directly or routed through
/// a `cycle` atom.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CycleMode {
    None,
    Hard,
    Soft(u64),
}

impl fmt::Display for CycleMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CycleMode::None => f.write_str("none"),
            CycleMode::Hard => f.write_str("hard"),
            CycleMode::Soft(w) => write!(f, "soft:{w}"),
        }
    }
}

impl FromStr for CycleMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "none" => Ok(CycleMode::None),
            "hard" => Ok(CycleMode::Hard),
            _ => s
                .strip_prefix("soft:")
                .and_then(|w| w.parse().ok())
                .filter(|&w| w > 0)
                .map(CycleMode::Soft)
                .ok_or_else(|| format!("unknown cycle mode `{s}` (none, hard, soft:<weight>)")),
        }
    }
}

/// A signed atom id in DIMACS convention.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Lit(i32);

impl Lit {
    pub fn pos(atom: u32) -> Lit {
        Lit(atom as i32)
    }

    pub fn neg(atom: u32) -> Lit {
        Lit(-(atom as i32))
    }

    pub fn from_dimacs(v: i32) -> Lit {
        debug_assert!(v != 0);
        Lit(v)
    }

    pub fn atom(self) -> u32 {
        self.0.unsigned_abs()
    }

    pub fn is_positive(self) -> bool {
        self.0 > 0
    }

    pub fn negate(self) -> Lit {
        Lit(-self.0)
    }

    pub fn to_dimacs(self) -> i32 {
        self.0
    }

    /// Whether the literal is true under `value(atom)`.
    #[inline]
    pub fn holds(self, value: bool) -> bool {
        value == self.is_positive()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Weight {
    Hard,
    Soft(u64),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Clause {
    pub lits: Vec<Lit>,
    pub weight: Weight,
}

impl Clause {
    pub fn hard(lits: Vec<Lit>) -> Self {
        Clause { lits, weight: Weight::Hard }
    }

    pub fn soft(lits: Vec<Lit>, w: u64) -> Self {
        Clause { lits, weight: Weight::Soft(w) }
    }

    pub fn is_hard(&self) -> bool {
        self.weight == Weight::Hard
    }
}

/// Where a Wcnf came from; emitted as a `c bnsat` comment line.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Provenance {
    pub encoding: EncodingMode,
    pub cycle: CycleMode,
    pub scores_digest: String,
}

/// A weighted CNF with hard clauses weighted `top`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Wcnf {
    num_atoms: usize,
    clauses: Vec<Clause>,
    top: u64,
    provenance: Option<Provenance>,
}

impl Wcnf {
    /// `top` defaults to one more than the total soft weight.
    pub fn new(num_atoms: usize, clauses: Vec<Clause>) -> Result<Self, EncodeError> {
        let soft = clauses
            .iter()
            .try_fold(0u64, |acc, c| match c.weight {
                Weight::Soft(w) => acc.checked_add(w),
                Weight::Hard => Some(acc),
            })
            .ok_or(EncodeError::WeightOverflow)?;
        let top = soft.checked_add(1).ok_or(EncodeError::WeightOverflow)?;
        // the solver sums `top` once per violated hard clause
        let hard = clauses.iter().filter(|c| c.is_hard()).count() as u64;
        top.checked_mul(hard + 1)
            .and_then(|x| x.checked_add(soft))
            .ok_or(EncodeError::WeightOverflow)?;
        Ok(Wcnf { num_atoms, clauses, top, provenance: None })
    }

    pub fn with_provenance(mut self, p: Provenance) -> Self {
        self.provenance = Some(p);
        self
    }

    pub fn num_atoms(&self) -> usize {
        self.num_atoms
    }

    pub fn clauses(&self) -> &[Clause] {
        &self.clauses
    }

    pub fn top(&self) -> u64 {
        self.top
    }

    pub fn provenance(&self) -> Option<&Provenance> {
        self.provenance.as_ref()
    }

    pub fn num_literals(&self) -> usize {
        self.clauses.iter().map(|c| c.lits.len()).sum()
    }

    pub fn num_hard(&self) -> usize {
        self.clauses.iter().filter(|c| c.is_hard()).count()
    }

    pub fn soft_weight_sum(&self) -> u64 {
        self.clauses
            .iter()
            .map(|c| match c.weight {
                Weight::Soft(w) => w,
                Weight::Hard => 0,
            })
            .sum()
    }

    /// Cost of a clause when violated (`top` for hard clauses).
    pub fn cost_of(&self, clause: &Clause) -> u64 {
        match clause.weight {
            Weight::Hard => self.top,
            Weight::Soft(w) => w,
        }
    }

    /// Digest of the emitted text.
    pub fn digest(&self) -> String {
        digest_text(&emit_wcnf(self))
    }
}

/// Standard weighted DIMACS: `p wcnf <atoms> <clauses> <top>` then one
/// `weight lits... 0` line per clause, hard clauses weighted `top`.
pub fn emit_wcnf(problem: &Wcnf) -> String {
    let mut out = String::with_capacity(16 * problem.clauses.len() + 64);
    if let Some(p) = &problem.provenance {
        writeln!(out, "c bnsat encoding={} cycle={} scores={}", p.encoding, p.cycle, p.scores_digest).unwrap();
    }
    writeln!(out, "p wcnf {} {} {}", problem.num_atoms, problem.clauses.len(), problem.top).unwrap();
    for c in &problem.clauses {
        write!(out, "{}", problem.cost_of(c)).unwrap();
        for l in &c.lits {
            write!(out, " {}", l.to_dimacs()).unwrap();
        }
        out.push_str(" 0\n");
    }
    out
}

pub fn parse_wcnf(text: &str) -> Result<Wcnf, WcnfError> {
    let mut header: Option<(usize, usize, u64)> = None;
    let mut provenance = None;
    let mut clauses = Vec::new();
    let mut current: Option<(u64, Vec<Lit>, usize)> = None;

    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix('c') {
            if rest.is_empty() || rest.starts_with(char::is_whitespace) {
                if let Some(p) = parse_provenance(rest.trim()) {
                    provenance = Some(p);
                }
                continue;
            }
        }
        if trimmed.starts_with('p') {
            if header.is_some() {
                return Err(WcnfError::Header { line: line_no, msg: "duplicate header".into() });
            }
            let f: Vec<&str> = trimmed.split_whitespace().collect();
            if f.len() != 5 || f[0] != "p" || f[1] != "wcnf" {
                return Err(WcnfError::Header { line: line_no, msg: "expected `p wcnf <atoms> <clauses> <top>`".into() });
            }
            let parse = |s: &str| {
                s.parse::<u64>()
                    .map_err(|_| WcnfError::Header { line: line_no, msg: format!("bad number `{s}`") })
            };
            header = Some((parse(f[2])? as usize, parse(f[3])? as usize, parse(f[4])?));
            continue;
        }
        let Some((atoms, _, top)) = header else {
            return Err(WcnfError::Header { line: line_no, msg: "clause before header".into() });
        };
        for tok in trimmed.split_whitespace() {
            let v: i64 = tok
                .parse()
                .map_err(|_| WcnfError::Malformed { line: line_no, msg: format!("bad token `{tok}`") })?;
            match current.as_mut() {
                None => {
                    if v < 0 {
                        return Err(WcnfError::Malformed { line: line_no, msg: "negative weight".into() });
                    }
                    current = Some((v as u64, Vec::new(), line_no));
                }
                Some((w, lits, _)) => {
                    if v == 0 {
                        if lits.is_empty() {
                            return Err(WcnfError::Malformed { line: line_no, msg: "empty clause".into() });
                        }
                        let weight = if *w >= top { Weight::Hard } else { Weight::Soft(*w) };
                        clauses.push(Clause { lits: std::mem::take(lits), weight });
                        current = None;
                    } else {
                        if v.unsigned_abs() as usize > atoms {
                            return Err(WcnfError::LiteralOutOfRange { line: line_no, lit: v, atoms });
                        }
                        lits.push(Lit::from_dimacs(v as i32));
                    }
                }
            }
        }
    }
    let Some((atoms, expected, top)) = header else {
        return Err(WcnfError::Header { line: 1, msg: "missing header".into() });
    };
    if current.is_some() {
        return Err(WcnfError::MissingTerminator(clauses.len() + 1));
    }
    if clauses.len() != expected {
        return Err(WcnfError::ClauseCount { expected, found: clauses.len() });
    }
    let soft = clauses.iter().try_fold(0u64, |acc, c| match c.weight {
        Weight::Soft(w) => acc.checked_add(w),
        Weight::Hard => Some(acc),
    });
    let hard = clauses.iter().filter(|c| c.is_hard()).count() as u64;
    soft.and_then(|s| top.checked_mul(hard + 1)?.checked_add(s)).ok_or(WcnfError::WeightOverflow)?;
    Ok(Wcnf { num_atoms: atoms, clauses, top, provenance })
}

fn parse_provenance(comment: &str) -> Option<Provenance> {
    let rest = comment.strip_prefix("bnsat ")?;
    let mut encoding = None;
    let mut cycle = None;
    let mut scores = None;
    for kv in rest.split_whitespace() {
        match kv.split_once('=')? {
            ("encoding", v) => encoding = v.parse().ok(),
            ("cycle", v) => cycle = v.parse().ok(),
            ("scores", v) => scores = Some(v.to_string()),
            _ => {}
        }
    }
    Some(Provenance { encoding: encoding?, cycle: cycle?, scores_digest: scores? })
}

/// What an atom id stands for.
#[derive(Clone, Debug, PartialEq)]
pub enum Atom {
    /// `child` has exactly `parents` as its parent set.
    Family { child: usize, parents: ParentSet, log_score: f64, weight: u64 },
    /// `from` is an ancestor of `to`.
    Anc { from: usize, to: usize },
    /// `first` precedes `second` in the total order (`first < second`).
    Ord { first: usize, second: usize },
    Cycle,
}

/// Number of clauses emitted for each clause family.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ClauseCounts {
    pub must_have: usize,
    pub soft: usize,
    pub linking: usize,
    pub transitivity: usize,
    /// 2-cycle bans, or implications into the cycle atom.
    pub acyclicity: usize,
    pub cycle_unit: usize,
}

impl ClauseCounts {
    pub fn total(&self) -> usize {
        self.must_have + self.soft + self.linking + self.transitivity + self.acyclicity + self.cycle_unit
    }
}

/// Decoding table for a Wcnf: atom id to meaning, with exact family scores.
#[derive(Clone, Debug, PartialEq)]
pub struct AtomMap {
    variables: Vec<VariableDecl>,
    encoding: EncodingMode,
    cycle: CycleMode,
    scores_digest: String,
    data_digest: String,
    wcnf_digest: String,
    counts: ClauseCounts,
    atoms: Vec<Atom>,
    families_by_child: Vec<Vec<u32>>,
}

impl AtomMap {
    #[allow(clippy::too_many_arguments)]
    fn new(
        variables: Vec<VariableDecl>,
        encoding: EncodingMode,
        cycle: CycleMode,
        scores_digest: String,
        data_digest: String,
        wcnf_digest: String,
        counts: ClauseCounts,
        atoms: Vec<Atom>,
    ) -> Self {
        let mut families_by_child = vec![Vec::new(); variables.len()];
        for (i, a) in atoms.iter().enumerate() {
            if let Atom::Family { child, .. } = a {
                families_by_child[*child].push(i as u32 + 1);
            }
        }
        AtomMap { variables, encoding, cycle, scores_digest, data_digest, wcnf_digest, counts, atoms, families_by_child }
    }

    pub fn variables(&self) -> &[VariableDecl] {
        &self.variables
    }

    pub fn num_variables(&self) -> usize {
        self.variables.len()
    }

    pub fn encoding(&self) -> EncodingMode {
        self.encoding
    }

    pub fn cycle(&self) -> CycleMode {
        self.cycle
    }

    pub fn scores_digest(&self) -> &str {
        &self.scores_digest
    }

    pub fn data_digest(&self) -> &str {
        &self.data_digest
    }

    pub fn wcnf_digest(&self) -> &str {
        &self.wcnf_digest
    }

    pub fn clause_counts(&self) -> ClauseCounts {
        self.counts
    }

    pub fn num_atoms(&self) -> usize {
        self.atoms.len()
    }

    /// Meaning of a 1-based atom id.
    pub fn atom(&self, id: u32) -> Option<&Atom> {
        id.checked_sub(1).and_then(|i| self.atoms.get(i as usize))
    }

    pub fn atoms(&self) -> impl Iterator<Item = (u32, &Atom)> {
        self.atoms.iter().enumerate().map(|(i, a)| (i as u32 + 1, a))
    }

    /// Family atom ids of one child, in score-table order.
    pub fn family_ids(&self, child: usize) -> &[u32] {
        &self.families_by_child[child]
    }

    pub fn num_families(&self) -> usize {
        self.families_by_child.iter().map(Vec::len).sum()
    }

    /// (child, parents, exact log score, rounded weight) of a family atom.
    pub fn family(&self, id: u32) -> Option<(usize, &ParentSet, f64, u64)> {
        match self.atom(id)? {
            Atom::Family { child, parents, log_score, weight } => Some((*child, parents, *log_score, *weight)),
            _ => None,
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(ATOMS_HEADER);
        out.push('\n');
        writeln!(
            out,
            "# encoding={} cycle={} scores={} data={} wcnf={} order=declaration",
            self.encoding, self.cycle, self.scores_digest, self.data_digest, self.wcnf_digest
        )
        .unwrap();
        let c = &self.counts;
        writeln!(
            out,
            "# clauses must_have={} soft={} linking={} transitivity={} acyclicity={} cycle_unit={}",
            c.must_have, c.soft, c.linking, c.transitivity, c.acyclicity, c.cycle_unit
        )
        .unwrap();
        for v in &self.variables {
            write!(out, "# variable {}", v.name).unwrap();
            for l in &v.values {
                write!(out, " {l}").unwrap();
            }
            out.push('\n');
        }
        let name = |i: usize| self.variables[i].name.as_str();
        for (id, atom) in self.atoms() {
            match atom {
                Atom::Family { child, parents, log_score, weight } => {
                    let ps: Vec<&str> = parents.iter().map(name).collect();
                    writeln!(out, "{id}\tfamily\t{}\t{}\t{}\t{}", name(*child), ps.join(","), log_score, weight).unwrap();
                }
                Atom::Anc { from, to } => writeln!(out, "{id}\tanc\t{}\t{}", name(*from), name(*to)).unwrap(),
                Atom::Ord { first, second } => writeln!(out, "{id}\tord\t{}\t{}", name(*first), name(*second)).unwrap(),
                Atom::Cycle => writeln!(out, "{id}\tcycle").unwrap(),
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, AtomMapError> {
        let ferr = |line: usize, msg: &str| AtomMapError::Format { line, msg: msg.to_string() };
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, l)) if l.trim_end() == ATOMS_HEADER => {}
            _ => return Err(ferr(1, "missing `# bnsat-atoms v1` header")),
        }
        let mut kv: HashMap<String, String> = HashMap::new();
        let mut variables = Vec::new();
        let mut index: HashMap<String, usize> = HashMap::new();
        let mut atoms = Vec::new();
        for (i, line) in lines {
            let line_no = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("# variable ") {
                let mut parts = rest.split_whitespace();
                let name = parts.next().ok_or_else(|| ferr(line_no, "missing name"))?;
                index.insert(name.to_string(), variables.len());
                variables.push(VariableDecl::new(name, parts.map(str::to_string).collect()));
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                for pair in rest.split_whitespace() {
                    if let Some((k, v)) = pair.split_once('=') {
                        kv.insert(k.to_string(), v.to_string());
                    }
                }
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            let id: usize = f[0].parse().map_err(|_| ferr(line_no, "bad atom id"))?;
            if id != atoms.len() + 1 {
                return Err(ferr(line_no, "atom ids must be contiguous from 1"));
            }
            let var = |s: &str| index.get(s).copied().ok_or_else(|| ferr(line_no, "unknown variable"));
            let atom = match (f.get(1).copied(), f.len()) {
                (Some("family"), 6) => {
                    let parents = if f[3].is_empty() {
                        ParentSet::empty()
                    } else {
                        ParentSet::new(f[3].split(',').map(var).collect::<Result<Vec<_>, _>>()?)
                    };
                    Atom::Family {
                        child: var(f[2])?,
                        parents,
                        log_score: f[4].parse().map_err(|_| ferr(line_no, "bad score"))?,
                        weight: f[5].parse().map_err(|_| ferr(line_no, "bad weight"))?,
                    }
                }
                (Some("anc"), 4) => Atom::Anc { from: var(f[2])?, to: var(f[3])? },
                (Some("ord"), 4) => Atom::Ord { first: var(f[2])?, second: var(f[3])? },
                (Some("cycle"), 2) => Atom::Cycle,
                _ => return Err(ferr(line_no, "unrecognized atom line")),
            };
            atoms.push(atom);
        }
        let get = |k: &str| kv.get(k).cloned().ok_or_else(|| ferr(2, &format!("missing `{k}`")));
        let num = |k: &str| -> Result<usize, AtomMapError> {
            get(k)?.parse().map_err(|_| ferr(3, &format!("bad `{k}`")))
        };
        let counts = ClauseCounts {
            must_have: num("must_have")?,
            soft: num("soft")?,
            linking: num("linking")?,
            transitivity: num("transitivity")?,
            acyclicity: num("acyclicity")?,
            cycle_unit: num("cycle_unit")?,
        };
        Ok(AtomMap::new(
            variables,
            get("encoding")?.parse().map_err(|e: String| ferr(2, &e))?,
            get("cycle")?.parse().map_err(|e: String| ferr(2, &e))?,
            get("scores")?,
            get("data")?,
            get("wcnf")?,
            counts,
            atoms,
        ))
    }

    /// Digest of the sidecar text.
    pub fn digest(&self) -> String {
        digest_text(&self.to_text())
    }
}

/// Rounded cost of a family: `round(-log score)`, half away from zero.
pub fn family_weight(log_score: f64) -> Option<u64> {
    let w = (-log_score).round();
    (log_score.is_finite() && w >= 0.0 && w < u64::MAX as f64).then_some(w as u64)
}

/// Compiles `scores` (normally pruned) into a Wcnf and its atom map.
pub fn encode(scores: &ScoreTable, mode: EncodingMode, cycle: CycleMode) -> Result<(Wcnf, AtomMap), EncodeError> {
    let n = scores.num_variables();
    if n == 0 {
        return Err(EncodeError::EmptyTable);
    }
    if mode == EncodingMode::Order && cycle != CycleMode::None {
        return Err(EncodeError::CycleAtomNeedsAncestor);
    }
    let name = |i: usize| scores.variables()[i].name.clone();

    let mut atoms: Vec<Atom> = Vec::new();
    let mut family_ids: Vec<Vec<u32>> = vec![Vec::new(); n];
    for (child, ids) in family_ids.iter_mut().enumerate() {
        if scores.num_entries(child) == 0 {
            return Err(EncodeError::EmptyCandidates(name(child)));
        }
        for (pa, s) in scores.entries(child) {
            let weight = family_weight(s).ok_or(EncodeError::InvalidScore { child: name(child), score: s })?;
            atoms.push(Atom::Family { child, parents: pa.clone(), log_score: s, weight });
            ids.push(atoms.len() as u32);
        }
    }

    // ancestor ids: anc[i][j]; order ids: ord[i][j] for i < j
    let mut pair_id = vec![vec![0u32; n]; n];
    #[allow(clippy::needless_range_loop)]
    match mode {
        EncodingMode::Ancestor => {
            for i in 0..n {
                for j in 0..n {
                    if i != j {
                        atoms.push(Atom::Anc { from: i, to: j });
                        pair_id[i][j] = atoms.len() as u32;
                    }
                }
            }
        }
        EncodingMode::Order => {
            for i in 0..n {
                for j in i + 1..n {
                    atoms.push(Atom::Ord { first: i, second: j });
                    pair_id[i][j] = atoms.len() as u32;
                }
            }
        }
    }
    let cycle_id = if cycle != CycleMode::None {
        atoms.push(Atom::Cycle);
        Some(atoms.len() as u32)
    } else {
        None
    };

    // literal asserting `a` comes before `b` (ancestor: a is an ancestor of b)
    let before = |a: usize, b: usize| -> Lit {
        match mode {
            EncodingMode::Ancestor => Lit::pos(pair_id[a][b]),
            EncodingMode::Order if a < b => Lit::pos(pair_id[a][b]),
            EncodingMode::Order => Lit::neg(pair_id[b][a]),
        }
    };

    let mut counts = ClauseCounts::default();
    let mut clauses = Vec::new();
    for ids in &family_ids {
        clauses.push(Clause::hard(ids.iter().map(|&id| Lit::pos(id)).collect()));
        counts.must_have += 1;
    }
    for ids in &family_ids {
        for &id in ids {
            if let Atom::Family { weight, .. } = atoms[id as usize - 1] {
                if weight > 0 {
                    clauses.push(Clause::soft(vec![Lit::neg(id)], weight));
                    counts.soft += 1;
                }
            }
        }
    }
    for ids in &family_ids {
        for &id in ids {
            if let Atom::Family { child, parents, .. } = &atoms[id as usize - 1] {
                for p in parents.iter() {
                    clauses.push(Clause::hard(vec![Lit::neg(id), before(p, *child)]));
                    counts.linking += 1;
                }
            }
        }
    }
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                if i != j && j != k && i != k {
                    clauses.push(Clause::hard(vec![before(i, j).negate(), before(j, k).negate(), before(i, k)]));
                    counts.transitivity += 1;
                }
            }
        }
    }
    if mode == EncodingMode::Ancestor {
        for i in 0..n {
            for j in i + 1..n {
                let mut lits = vec![before(i, j).negate(), before(j, i).negate()];
                if let Some(c) = cycle_id {
                    lits.push(Lit::pos(c));
                }
                clauses.push(Clause::hard(lits));
                counts.acyclicity += 1;
            }
        }
        if let Some(c) = cycle_id {
            clauses.push(match cycle {
                CycleMode::Soft(w) => Clause::soft(vec![Lit::neg(c)], w),
                _ => Clause::hard(vec![Lit::neg(c)]),
            });
            counts.cycle_unit += 1;
        }
    }

    let wcnf = Wcnf::new(atoms.len(), clauses)?.with_provenance(Provenance {
        encoding: mode,
        cycle,
        scores_digest: scores.digest(),
    });
    let map = AtomMap::new(
        scores.variables().to_vec(),
        mode,
        cycle,
        scores.digest(),
        scores.data_digest().to_string(),
        wcnf.digest(),
        counts,
        atoms,
    );
    Ok((wcnf, map))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(n: usize, entries: Vec<Vec<(Vec<usize>, f64)>>) -> ScoreTable {
        ScoreTable::new(
            1.0,
            n.saturating_sub(1),
            (0..n).map(|i| VariableDecl::with_arity(format!("v{i}"), 2)).collect(),
            "d".into(),
            true,
            entries
                .into_iter()
                .map(|l| l.into_iter().map(|(p, s)| (ParentSet::new(p), s)).collect())
                .collect(),
        )
    }

    #[test]
    fn order_mode_three_empty_families() {
        let t = table(3, vec![vec![(vec![], -3.2)], vec![(vec![], -7.5)], vec![(vec![], -1.0)]]);
        let (w, map) = encode(&t, EncodingMode::Order, CycleMode::None).unwrap();
        assert_eq!(w.num_atoms(), 6);
        let c = map.clause_counts();
        assert_eq!((c.must_have, c.soft, c.linking, c.transitivity), (3, 3, 0, 6));
        assert_eq!(w.clauses().len(), 12);
        // 3 + 8 + 1, half away from zero
        assert_eq!(w.top(), 13);
        let text = emit_wcnf(&w);
        assert_eq!(text.lines().filter(|l| !l.starts_with('c') && !l.starts_with('p')).count(), 12);
    }

    #[test]
    fn ancestor_counts_with_and_without_cycle_atom() {
        let t = table(
            3,
            vec![
                vec![(vec![], -3.0), (vec![1], -2.0), (vec![1, 2], -1.0)],
                vec![(vec![], -3.0)],
                vec![(vec![], -3.0), (vec![0], -2.0)],
            ],
        );
        let (w0, m0) = encode(&t, EncodingMode::Ancestor, CycleMode::None).unwrap();
        let (w1, m1) = encode(&t, EncodingMode::Ancestor, CycleMode::Hard).unwrap();
        assert_eq!(w0.num_atoms(), 6 + 6);
        assert_eq!(w1.num_atoms(), w0.num_atoms() + 1);
        assert_eq!(w1.clauses().len(), w0.clauses().len() + 1);
        let c = m1.clause_counts();
        assert_eq!((c.linking, c.transitivity, c.acyclicity, c.cycle_unit), (4, 6, 3, 1));
        assert_eq!(m0.clause_counts().cycle_unit, 0);
        assert_eq!(c.total(), w1.clauses().len());
    }

    #[test]
    fn soft_cycle_weight_is_counted_in_top() {
        let t = table(2, vec![vec![(vec![], -2.0)], vec![(vec![], -2.0)]]);
        let (w, _) = encode(&t, EncodingMode::Ancestor, CycleMode::Soft(10)).unwrap();
        assert_eq!(w.top(), 15);
        assert!(matches!(
            encode(&t, EncodingMode::Order, CycleMode::Hard),
            Err(EncodeError::CycleAtomNeedsAncestor)
        ));
    }

    #[test]
    fn order_linking_uses_precedence_literal() {
        // v0 has parents {v1, v2}: expect ¬F ∨ ¬ord(0,1) and ¬F ∨ ¬ord(0,2)
        // v2 has parent {v0}: ¬F ∨ ord(0,2)
        let t = table(
            3,
            vec![vec![(vec![], -3.0), (vec![1, 2], -1.0)], vec![(vec![], -3.0)], vec![(vec![], -3.0), (vec![0], -1.0)]],
        );
        let (w, map) = encode(&t, EncodingMode::Order, CycleMode::None).unwrap();
        let ord = |a: usize, b: usize| {
            map.atoms()
                .find(|(_, at)| matches!(at, Atom::Ord { first, second } if *first == a && *second == b))
                .unwrap()
                .0
        };
        let linking: Vec<Vec<i32>> = w
            .clauses()
            .iter()
            .filter(|c| c.is_hard() && c.lits.len() == 2)
            .map(|c| c.lits.iter().map(|l| l.to_dimacs()).collect())
            .collect();
        assert!(linking.contains(&vec![-2, -(ord(0, 1) as i32)]));
        assert!(linking.contains(&vec![-2, -(ord(0, 2) as i32)]));
        assert!(linking.contains(&vec![-5, ord(0, 2) as i32]));
    }

    #[test]
    fn zero_weight_families_stay_out_of_the_wcnf() {
        let t = table(2, vec![vec![(vec![], -0.4), (vec![1], -3.0)], vec![(vec![], -1.0)]]);
        let (w, map) = encode(&t, EncodingMode::Order, CycleMode::None).unwrap();
        assert_eq!(map.clause_counts().soft, 2);
        assert_eq!(map.family(1).unwrap().3, 0);
        assert!(w.clauses().iter().all(|c| c.weight != Weight::Soft(0)));
    }

    #[test]
    fn rounding_half_away_from_zero() {
        assert_eq!(family_weight(-2.5), Some(3));
        assert_eq!(family_weight(-2.49), Some(2));
        assert_eq!(family_weight(f64::NAN), None);
        assert_eq!(family_weight(1.0), None);
    }

    #[test]
    fn parse_minimal() {
        let w = parse_wcnf("p wcnf 1 1 2\n1 -1 0\n").unwrap();
        assert_eq!(w.clauses(), &[Clause::soft(vec![Lit::neg(1)], 1)]);
        assert_eq!(w.top(), 2);
    }

    #[test]
    fn parse_errors() {
        assert!(matches!(parse_wcnf("p cnf 1 1\n1 0\n"), Err(WcnfError::Header { .. })));
        assert!(matches!(
            parse_wcnf("p wcnf 10 1 5\n1 99 0\n"),
            Err(WcnfError::LiteralOutOfRange { lit: 99, .. })
        ));
        assert!(matches!(parse_wcnf("p wcnf 2 1 5\n1 2 -1\n"), Err(WcnfError::MissingTerminator(1))));
    }

    #[test]
    fn empty_wcnf_is_header_only() {
        let w = Wcnf::new(0, Vec::new()).unwrap();
        assert_eq!(emit_wcnf(&w), "p wcnf 0 0 1\n");
        assert_eq!(parse_wcnf(&emit_wcnf(&w)).unwrap(), w);
    }

    #[test]
    fn foreign_clause_layout() {
        let text = "c some comment\np wcnf 3 2 100\n100 1 2\n  3 0 5 -3\n0\n";
        let w = parse_wcnf(text).unwrap();
        assert_eq!(w.clauses()[0], Clause::hard(vec![Lit::pos(1), Lit::pos(2), Lit::pos(3)]));
        assert_eq!(w.clauses()[1], Clause::soft(vec![Lit::neg(3)], 5));
    }

    #[test]
    fn atom_map_roundtrip() {
        let t = table(3, vec![vec![(vec![], -3.0), (vec![1, 2], -1.25)], vec![(vec![], -3.0)], vec![(vec![], -3.0)]]);
        for (mode, cycle) in [
            (EncodingMode::Ancestor, CycleMode::Soft(4)),
            (EncodingMode::Ancestor, CycleMode::None),
            (EncodingMode::Order, CycleMode::None),
        ] {
            let (w, map) = encode(&t, mode, cycle).unwrap();
            let back = AtomMap::from_text(&map.to_text()).unwrap();
            assert_eq!(back, map);
            assert_eq!(back.wcnf_digest(), w.digest());
            assert_eq!(parse_wcnf(&emit_wcnf(&w)).unwrap(), w);
        }
    }
}
