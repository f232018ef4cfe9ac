//! Turns a solver assignment back into a DAG and scores it exactly.

use std::fmt::Write as _;

use thiserror::Error;

use crate::bif::{topological_order, BayesNet, NetworkError, VariableDecl};
use crate::encoder::{Atom, AtomMap, Weight, Wcnf};
use crate::solver::Assignment;
use crate::ParentSet;

#[derive(Debug, Error)]
pub enum DecodeError {
    #[error("assignment covers {found} atoms, atom map has {expected}")]
    Length { expected: usize, found: usize },
    #[error("no parent set chosen for `{0}`")]
    NoFamily(String),
    #[error("{count} parent sets chosen for `{child}`")]
    MultipleFamilies { child: String, count: usize },
    #[error("decoded graph has a directed cycle")]
    Cyclic,
    #[error("variable schemas differ")]
    SchemaMismatch,
    #[error(transparent)]
    Network(#[from] NetworkError),
}

/// What to do when a child has more than one family atom true.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Strictness {
    #[default]
    Strict,
    /// Keep the highest-scoring chosen family (diagnostics only).
    Lenient,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LearnedStructure {
    variables: Vec<VariableDecl>,
    parents: Vec<ParentSet>,
    family_ids: Vec<u32>,
    score: f64,
    cost: u64,
    source: String,
}

impl LearnedStructure {
    pub fn variables(&self) -> &[VariableDecl] {
        &self.variables
    }

    pub fn parents(&self, child: usize) -> &ParentSet {
        &self.parents[child]
    }

    pub fn all_parents(&self) -> &[ParentSet] {
        &self.parents
    }

    /// Chosen family atom id per child.
    pub fn family_ids(&self) -> &[u32] {
        &self.family_ids
    }

    /// Sum of unrounded family log scores.
    pub fn score(&self) -> f64 {
        self.score
    }

    /// Sum of rounded family weights.
    pub fn cost(&self) -> u64 {
        self.cost
    }

    /// Encoding, cycle mode and digest of the Wcnf the structure came from.
    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn num_arcs(&self) -> usize {
        self.parents.iter().map(ParentSet::len).sum()
    }

    /// Structure-only network for export.
    pub fn to_network(&self, name: &str) -> Result<BayesNet, NetworkError> {
        BayesNet::new(
            name,
            self.variables.clone(),
            self.parents.iter().map(|p| p.as_slice().to_vec()).collect(),
            None,
        )
    }
}

pub fn decode(assignment: &Assignment, map: &AtomMap) -> Result<LearnedStructure, DecodeError> {
    decode_with(assignment, map, Strictness::Strict)
}

pub fn decode_with(assignment: &Assignment, map: &AtomMap, mode: Strictness) -> Result<LearnedStructure, DecodeError> {
    if assignment.num_atoms() != map.num_atoms() {
        return Err(DecodeError::Length { expected: map.num_atoms(), found: assignment.num_atoms() });
    }
    let n = map.num_variables();
    let mut parents = Vec::with_capacity(n);
    let mut family_ids = Vec::with_capacity(n);
    let mut score = 0.0;
    let mut cost = 0u64;
    for child in 0..n {
        let chosen: Vec<u32> = map.family_ids(child).iter().copied().filter(|&id| assignment.get(id)).collect();
        let name = || map.variables()[child].name.clone();
        let id = match chosen.len() {
            0 => return Err(DecodeError::NoFamily(name())),
            1 => chosen[0],
            k if mode == Strictness::Strict => return Err(DecodeError::MultipleFamilies { child: name(), count: k }),
            _ => *chosen
                .iter()
                .max_by(|&&a, &&b| map.family(a).unwrap().2.total_cmp(&map.family(b).unwrap().2).then(b.cmp(&a)))
                .unwrap(),
        };
        let (_, pa, s, w) = map.family(id).expect("family id");
        parents.push(pa.clone());
        family_ids.push(id);
        score += s;
        cost += w;
    }
    let lists: Vec<Vec<usize>> = parents.iter().map(|p: &ParentSet| p.as_slice().to_vec()).collect();
    if topological_order(&lists).is_none() {
        return Err(DecodeError::Cyclic);
    }
    Ok(LearnedStructure {
        variables: map.variables().to_vec(),
        parents,
        family_ids,
        score,
        cost,
        source: format!("encoding={} cycle={} wcnf={}", map.encoding(), map.cycle(), map.wcnf_digest()),
    })
}

/// Unsatisfied clauses of an assignment, classified.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UnsatShape {
    pub unsat: usize,
    pub hard: usize,
    /// soft unit clauses over a family atom
    pub family_units: usize,
    /// children whose single chosen family has a nonzero weight
    pub expected: usize,
}

impl UnsatShape {
    /// Exactly one soft family unit per child with a nonzero-weight choice,
    /// and nothing else.
    pub fn is_canonical(&self) -> bool {
        self.hard == 0 && self.unsat == self.family_units && self.family_units == self.expected
    }
}

pub fn unsat_shape(problem: &Wcnf, map: &AtomMap, assignment: &Assignment) -> UnsatShape {
    let mut shape = UnsatShape { unsat: 0, hard: 0, family_units: 0, expected: 0 };
    for c in problem.clauses() {
        if c.lits.iter().any(|&l| assignment.holds(l)) {
            continue;
        }
        shape.unsat += 1;
        match c.weight {
            Weight::Hard => shape.hard += 1,
            Weight::Soft(_) => {
                if c.lits.len() == 1
                    && !c.lits[0].is_positive()
                    && matches!(map.atom(c.lits[0].atom()), Some(Atom::Family { .. }))
                {
                    shape.family_units += 1;
                }
            }
        }
    }
    for child in 0..map.num_variables() {
        let chosen: Vec<u32> = map.family_ids(child).iter().copied().filter(|&id| assignment.get(id)).collect();
        if let [id] = chosen[..] {
            if map.family(id).unwrap().3 > 0 {
                shape.expected += 1;
            }
        }
    }
    shape
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParentDiff {
    pub variable: String,
    pub learned: Vec<String>,
    pub reference: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Comparison {
    pub learned_score: f64,
    pub reference_score: f64,
    /// learned minus reference; also the log of the posterior probability ratio
    pub delta: f64,
    pub diffs: Vec<ParentDiff>,
}

impl Comparison {
    pub fn beats_reference(&self) -> bool {
        self.delta >= 0.0
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        writeln!(s, "learned score   {:.4}", self.learned_score).unwrap();
        writeln!(s, "reference score {:.4}", self.reference_score).unwrap();
        writeln!(s, "delta           {:.4}", self.delta).unwrap();
        writeln!(s, "log10 probability ratio {:.4}", self.delta / std::f64::consts::LN_10).unwrap();
        if self.diffs.is_empty() {
            s.push_str("parent sets identical\n");
        }
        for d in &self.diffs {
            writeln!(s, "{}: learned {{{}}} reference {{{}}}", d.variable, d.learned.join(","), d.reference.join(","))
                .unwrap();
        }
        s
    }
}

/// Compares a learned structure against a reference network whose exact
/// score on the same data is `reference_score`.
pub fn compare(learned: &LearnedStructure, reference: &BayesNet, reference_score: f64) -> Result<Comparison, DecodeError> {
    let same = learned.variables.len() == reference.num_variables()
        && learned
            .variables
            .iter()
            .zip(reference.variables())
            .all(|(a, b)| a.name == b.name && a.arity() == b.arity());
    if !same {
        return Err(DecodeError::SchemaMismatch);
    }
    let names = |ps: &[usize]| ps.iter().map(|&p| learned.variables[p].name.clone()).collect::<Vec<_>>();
    let diffs = (0..learned.variables.len())
        .filter_map(|i| {
            let r = ParentSet::new(reference.parents(i).to_vec());
            (r != learned.parents[i]).then(|| ParentDiff {
                variable: learned.variables[i].name.clone(),
                learned: names(learned.parents[i].as_slice()),
                reference: names(r.as_slice()),
            })
        })
        .collect();
    Ok(Comparison {
        learned_score: learned.score,
        reference_score,
        delta: learned.score - reference_score,
        diffs,
    })
}

/// One row of a results table: true, target and found scores.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreRow {
    pub label: String,
    pub true_score: f64,
    pub target_score: f64,
    pub found_score: f64,
}

impl ScoreRow {
    pub fn beats_true(&self) -> bool {
        self.found_score >= self.true_score
    }

    pub fn header() -> String {
        format!("{:<12} {:>14} {:>14} {:>14} {:>6}", "Data", "True", "Target", "Found", "> True")
    }

    pub fn render(&self) -> String {
        format!(
            "{:<12} {:>14.0} {:>14.0} {:>14.0} {:>6}",
            self.label,
            self.true_score,
            self.target_score,
            self.found_score,
            if self.beats_true() { "Y" } else { "N" }
        )
    }
}
