//! MaxWalkSat-style local search for weighted MAX-SAT.
//!
//! Each try starts from an initial assignment and performs up to `cutoff`
//! flips. A flip picks an unsatisfied clause uniformly at random; with
//! probability `noise` it flips a random atom of that clause, otherwise the
//! atom whose flip yields the lowest total cost.
//!
//! Tries draw from independent ChaCha8 streams keyed by (seed, try index), so
//! results do not depend on whether tries run in parallel.

use std::fmt::Write as _;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::encoder::{Lit, Weight, Wcnf};

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("solver configuration: {0}")]
    Config(String),
    #[error("initial assignment line {line}: {msg}")]
    InitFormat { line: usize, msg: String },
    #[error("initial assignment has {found} atoms, problem has {expected}")]
    InitLength { expected: usize, found: usize },
}

/// How each try's starting assignment is chosen.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub enum Init {
    #[default]
    Random,
    AllFalse,
    /// A fixed assignment, typically read with [`Assignment::from_text`].
    Given(Assignment),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SolverConfig {
    pub tries: usize,
    pub cutoff: u64,
    pub noise_num: u32,
    pub noise_den: u32,
    pub target_cost: Option<u64>,
    pub seed: u64,
    pub allow_random_hard_break: bool,
    pub init: Init,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig::baseline()
    }
}

impl SolverConfig {
    /// noise 50/100, cutoff 100,000, 100 tries.
    pub fn baseline() -> Self {
        SolverConfig {
            tries: 100,
            cutoff: 100_000,
            noise_num: 50,
            noise_den: 100,
            target_cost: None,
            seed: 0,
            allow_random_hard_break: true,
            init: Init::Random,
        }
    }

    /// noise 10/100, cutoff 10,000,000, random flips never break hard clauses.
    pub fn long() -> Self {
        SolverConfig {
            cutoff: 10_000_000,
            noise_num: 10,
            noise_den: 100,
            allow_random_hard_break: false,
            ..SolverConfig::baseline()
        }
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        if self.tries == 0 {
            return Err(SolverError::Config("tries must be positive".into()));
        }
        if self.cutoff == 0 {
            return Err(SolverError::Config("cutoff must be positive".into()));
        }
        if self.noise_den == 0 || self.noise_num > self.noise_den {
            return Err(SolverError::Config(format!("noise {}/{} is not in [0,1]", self.noise_num, self.noise_den)));
        }
        Ok(())
    }
}

/// Truth value per atom, indexed by 1-based atom id.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Assignment(Vec<bool>);

impl Assignment {
    pub fn all_false(num_atoms: usize) -> Self {
        Assignment(vec![false; num_atoms])
    }

    pub fn from_values(values: Vec<bool>) -> Self {
        Assignment(values)
    }

    /// Sets exactly the listed atoms true.
    pub fn from_true_atoms(num_atoms: usize, atoms: &[u32]) -> Self {
        let mut a = Assignment::all_false(num_atoms);
        for &id in atoms {
            a.set(id, true);
        }
        a
    }

    pub fn num_atoms(&self) -> usize {
        self.0.len()
    }

    #[inline]
    pub fn get(&self, atom: u32) -> bool {
        self.0[atom as usize - 1]
    }

    #[inline]
    pub fn set(&mut self, atom: u32, value: bool) {
        self.0[atom as usize - 1] = value;
    }

    #[inline]
    pub fn holds(&self, lit: Lit) -> bool {
        lit.holds(self.get(lit.atom()))
    }

    pub fn values(&self) -> &[bool] {
        &self.0
    }

    pub fn true_atoms(&self) -> impl Iterator<Item = u32> + '_ {
        self.0.iter().enumerate().filter(|(_, &v)| v).map(|(i, _)| i as u32 + 1)
    }

    /// One `0`/`1` per line, in atom-id order.
    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(2 * self.0.len());
        for &v in &self.0 {
            s.push(if v { '1' } else { '0' });
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self, SolverError> {
        let mut values = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            values.push(match t {
                "1" | "true" | "T" => true,
                "0" | "false" | "F" => false,
                _ => return Err(SolverError::InitFormat { line: i + 1, msg: format!("expected 0 or 1, got `{t}`") }),
            });
        }
        Ok(Assignment(values))
    }
}

/// Total weight of clauses `assignment` violates, `top` per hard clause.
pub fn check_cost(problem: &Wcnf, assignment: &Assignment) -> u64 {
    problem
        .clauses()
        .iter()
        .filter(|c| !c.lits.iter().any(|&l| assignment.holds(l)))
        .map(|c| problem.cost_of(c))
        .sum()
}

/// Called from inside the search loop. One observer instance serves one try.
pub trait SearchObserver {
    fn start(&mut self, _assignment: &Assignment) {}
    fn flipped(&mut self, _atom: u32, _value: bool) {}
    /// The current assignment violates no hard clause.
    fn feasible(&mut self, assignment: &Assignment, cost: u64);
}

pub struct NoObserver;

impl SearchObserver for NoObserver {
    fn feasible(&mut self, _: &Assignment, _: u64) {}
}

const NOT_UNSAT: u32 = u32::MAX;

/// Incremental WalkSAT bookkeeping over one assignment.
#[derive(Clone, Debug)]
pub struct FlipState {
    assignment: Assignment,
    lits: Vec<i32>,
    starts: Vec<u32>,
    weight: Vec<u64>,
    hard: Vec<bool>,
    /// clauses in which the atom occurs positively / negatively
    pos_occ: Vec<Vec<u32>>,
    neg_occ: Vec<Vec<u32>>,
    num_true: Vec<u32>,
    /// xor of the atoms with a true literal; the critical atom when num_true is 1
    true_xor: Vec<u32>,
    break_w: Vec<u64>,
    make_w: Vec<u64>,
    hard_breaks: Vec<u32>,
    unsat: Vec<u32>,
    unsat_pos: Vec<u32>,
    cost: u64,
    hard_unsat: usize,
}

impl FlipState {
    pub fn new(problem: &Wcnf, assignment: Assignment) -> Self {
        let n = problem.num_atoms();
        assert_eq!(assignment.num_atoms(), n, "assignment must cover every atom");
        let mut lits = Vec::with_capacity(problem.num_literals());
        let mut starts = vec![0u32];
        let mut weight = Vec::new();
        let mut hard = Vec::new();
        let mut pos_occ = vec![Vec::new(); n + 1];
        let mut neg_occ = vec![Vec::new(); n + 1];
        for clause in problem.clauses() {
            let mut ls: Vec<i32> = clause.lits.iter().map(|l| l.to_dimacs()).collect();
            ls.sort_unstable();
            ls.dedup();
            // tautologies never contribute cost
            if ls.iter().any(|l| ls.binary_search(&-l).is_ok()) {
                continue;
            }
            let c = weight.len() as u32;
            for &l in &ls {
                if l > 0 {
                    pos_occ[l as usize].push(c);
                } else {
                    neg_occ[(-l) as usize].push(c);
                }
            }
            lits.extend_from_slice(&ls);
            starts.push(lits.len() as u32);
            weight.push(problem.cost_of(clause));
            hard.push(clause.weight == Weight::Hard);
        }
        let m = weight.len();
        let mut s = FlipState {
            assignment,
            lits,
            starts,
            weight,
            hard,
            pos_occ,
            neg_occ,
            num_true: vec![0; m],
            true_xor: vec![0; m],
            break_w: vec![0; n + 1],
            make_w: vec![0; n + 1],
            hard_breaks: vec![0; n + 1],
            unsat: Vec::new(),
            unsat_pos: vec![NOT_UNSAT; m],
            cost: 0,
            hard_unsat: 0,
        };
        s.rebuild();
        s
    }

    fn clause(&self, c: usize) -> &[i32] {
        &self.lits[self.starts[c] as usize..self.starts[c + 1] as usize]
    }

    fn rebuild(&mut self) {
        self.break_w.iter_mut().for_each(|x| *x = 0);
        self.make_w.iter_mut().for_each(|x| *x = 0);
        self.hard_breaks.iter_mut().for_each(|x| *x = 0);
        self.unsat.clear();
        self.cost = 0;
        self.hard_unsat = 0;
        for c in 0..self.weight.len() {
            let (mut nt, mut x) = (0u32, 0u32);
            for &l in self.clause(c) {
                let a = l.unsigned_abs();
                if self.assignment.get(a) == (l > 0) {
                    nt += 1;
                    x ^= a;
                }
            }
            self.num_true[c] = nt;
            self.true_xor[c] = x;
            self.unsat_pos[c] = NOT_UNSAT;
            let w = self.weight[c];
            match nt {
                0 => {
                    self.add_unsat(c as u32);
                    for i in self.starts[c]..self.starts[c + 1] {
                        self.make_w[self.lits[i as usize].unsigned_abs() as usize] += w;
                    }
                }
                1 => {
                    self.break_w[x as usize] += w;
                    if self.hard[c] {
                        self.hard_breaks[x as usize] += 1;
                    }
                }
                _ => {}
            }
        }
    }

    #[inline]
    fn add_unsat(&mut self, c: u32) {
        self.unsat_pos[c as usize] = self.unsat.len() as u32;
        self.unsat.push(c);
        self.cost += self.weight[c as usize];
        if self.hard[c as usize] {
            self.hard_unsat += 1;
        }
    }

    #[inline]
    fn remove_unsat(&mut self, c: u32) {
        let pos = self.unsat_pos[c as usize] as usize;
        let last = self.unsat.pop().expect("clause is in the unsat list");
        if last != c {
            self.unsat[pos] = last;
            self.unsat_pos[last as usize] = pos as u32;
        }
        self.unsat_pos[c as usize] = NOT_UNSAT;
        self.cost -= self.weight[c as usize];
        if self.hard[c as usize] {
            self.hard_unsat -= 1;
        }
    }

    /// Flips `atom` and updates all bookkeeping.
    pub fn flip(&mut self, atom: u32) {
        let a = atom as usize;
        let now = !self.assignment.get(atom);
        self.assignment.set(atom, now);
        let (gain, lose) = if now {
            (std::mem::take(&mut self.pos_occ[a]), std::mem::take(&mut self.neg_occ[a]))
        } else {
            (std::mem::take(&mut self.neg_occ[a]), std::mem::take(&mut self.pos_occ[a]))
        };
        for &c in &gain {
            let ci = c as usize;
            let w = self.weight[ci];
            let hard = self.hard[ci];
            match self.num_true[ci] {
                0 => {
                    self.remove_unsat(c);
                    for i in self.starts[ci]..self.starts[ci + 1] {
                        self.make_w[self.lits[i as usize].unsigned_abs() as usize] -= w;
                    }
                    self.break_w[a] += w;
                    if hard {
                        self.hard_breaks[a] += 1;
                    }
                }
                1 => {
                    let crit = self.true_xor[ci] as usize;
                    self.break_w[crit] -= w;
                    if hard {
                        self.hard_breaks[crit] -= 1;
                    }
                }
                _ => {}
            }
            self.num_true[ci] += 1;
            self.true_xor[ci] ^= atom;
        }
        for &c in &lose {
            let ci = c as usize;
            let w = self.weight[ci];
            let hard = self.hard[ci];
            self.num_true[ci] -= 1;
            self.true_xor[ci] ^= atom;
            match self.num_true[ci] {
                0 => {
                    self.add_unsat(c);
                    self.break_w[a] -= w;
                    if hard {
                        self.hard_breaks[a] -= 1;
                    }
                    for i in self.starts[ci]..self.starts[ci + 1] {
                        self.make_w[self.lits[i as usize].unsigned_abs() as usize] += w;
                    }
                }
                1 => {
                    let crit = self.true_xor[ci] as usize;
                    self.break_w[crit] += w;
                    if hard {
                        self.hard_breaks[crit] += 1;
                    }
                }
                _ => {}
            }
        }
        if now {
            self.pos_occ[a] = gain;
            self.neg_occ[a] = lose;
        } else {
            self.neg_occ[a] = gain;
            self.pos_occ[a] = lose;
        }
    }

    pub fn assignment(&self) -> &Assignment {
        &self.assignment
    }

    pub fn cost(&self) -> u64 {
        self.cost
    }

    pub fn num_unsat(&self) -> usize {
        self.unsat.len()
    }

    pub fn num_hard_unsat(&self) -> usize {
        self.hard_unsat
    }

    /// Change in total cost if `atom` were flipped.
    #[inline]
    pub fn delta(&self, atom: u32) -> i64 {
        self.break_w[atom as usize] as i64 - self.make_w[atom as usize] as i64
    }

    /// Number of satisfied hard clauses that flipping `atom` would violate.
    pub fn hard_breaks(&self, atom: u32) -> u32 {
        self.hard_breaks[atom as usize]
    }

    /// Indices of unsatisfied clauses, in the problem's (tautology-free) numbering.
    pub fn unsat_clauses(&self) -> &[u32] {
        &self.unsat
    }

    /// Compares every incremental quantity against a from-scratch rebuild.
    pub fn verify(&self) -> Result<(), String> {
        let mut fresh = self.clone();
        fresh.rebuild();
        if fresh.cost != self.cost {
            return Err(format!("cost {} != recomputed {}", self.cost, fresh.cost));
        }
        if fresh.hard_unsat != self.hard_unsat {
            return Err("hard-unsat count drifted".into());
        }
        if fresh.num_true != self.num_true || fresh.true_xor != self.true_xor {
            return Err("per-clause true counts drifted".into());
        }
        if fresh.break_w != self.break_w || fresh.make_w != self.make_w || fresh.hard_breaks != self.hard_breaks {
            return Err("break/make weights drifted".into());
        }
        let mut a = fresh.unsat.clone();
        let mut b = self.unsat.clone();
        a.sort_unstable();
        b.sort_unstable();
        if a != b {
            return Err("unsat list drifted".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TryStats {
    pub lowest_cost: u64,
    pub unsat_at_lowest: usize,
    pub flips_at_lowest: u64,
    pub flips: u64,
    pub target_met: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct SolverStats {
    pub tries: Vec<TryStats>,
    pub best_cost: u64,
    pub best_try: usize,
    pub total_flips: u64,
    pub success: bool,
    pub target_cost: Option<u64>,
    #[serde(skip)]
    pub seconds: f64,
    #[serde(skip)]
    pub flips_per_second: f64,
}

impl SolverStats {
    /// Human-readable run trace, one row per try.
    pub fn render_trace(&self, problem: &Wcnf, config: &SolverConfig) -> String {
        let mut s = String::new();
        writeln!(s, "cutoff = {}", config.cutoff).unwrap();
        writeln!(s, "tries = {}", config.tries).unwrap();
        if let Some(t) = config.target_cost {
            writeln!(s, "targetcost = {t}").unwrap();
        }
        let init = match config.init {
            Init::Random => "random",
            Init::AllFalse => "allfalse",
            Init::Given(_) => "initfile",
        };
        writeln!(s, "heuristic = best, noise {} / {}, init {init}", config.noise_num, config.noise_den).unwrap();
        writeln!(
            s,
            "numatom = {}, numclause = {}, numliterals = {}",
            problem.num_atoms(),
            problem.clauses().len(),
            problem.num_literals()
        )
        .unwrap();
        s.push('\n');
        writeln!(s, "{:>14} {:>8} {:>12} {:>12}", "lowest cost", "#unsat", "flips at", "flips").unwrap();
        writeln!(s, "{:>14} {:>8} {:>12} {:>12}", "this try", "this try", "lowest", "this try").unwrap();
        for t in &self.tries {
            writeln!(
                s,
                "{:>14} {:>8} {:>12} {:>12}{}",
                t.lowest_cost,
                t.unsat_at_lowest,
                t.flips_at_lowest,
                t.flips,
                if t.target_met { "  *" } else { "" }
            )
            .unwrap();
        }
        s.push('\n');
        writeln!(s, "best cost = {} (try {})", self.best_cost, self.best_try + 1).unwrap();
        writeln!(s, "total flips = {}", self.total_flips).unwrap();
        writeln!(s, "total elapsed seconds = {:.6}", self.seconds).unwrap();
        writeln!(s, "average flips per second = {:.0}", self.flips_per_second).unwrap();
        if let Some(t) = self.target_cost {
            if self.success {
                writeln!(s, "ASSIGNMENT ACHIEVING TARGET {t} FOUND").unwrap();
            } else {
                writeln!(s, "ASSIGNMENT ACHIEVING TARGET {t} NOT FOUND").unwrap();
            }
        }
        s
    }
}

#[derive(Clone, Debug)]
pub struct SolveResult {
    pub best: Assignment,
    pub cost: u64,
    /// Best assignment of each try that ran, in try order.
    pub per_try: Vec<Assignment>,
    pub stats: SolverStats,
}

struct TryOutcome<O> {
    best: Assignment,
    stats: TryStats,
    observer: O,
}

fn initial(problem: &Wcnf, init: &Init, rng: &mut ChaCha8Rng) -> Assignment {
    let n = problem.num_atoms();
    match init {
        Init::Random => Assignment((0..n).map(|_| rng.random::<bool>()).collect()),
        Init::AllFalse => Assignment::all_false(n),
        Init::Given(a) => a.clone(),
    }
}

fn run_try<O: SearchObserver>(
    problem: &Wcnf,
    config: &SolverConfig,
    index: usize,
    mut observer: O,
    stop_after: &AtomicUsize,
) -> TryOutcome<O> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(index as u64);
    let mut state = FlipState::new(problem, initial(problem, &config.init, &mut rng));
    observer.start(state.assignment());
    if state.hard_unsat == 0 {
        observer.feasible(state.assignment(), state.cost);
    }
    let met = |cost: u64| config.target_cost.is_some_and(|t| cost <= t);

    let atoms = problem.num_atoms();
    let mut best = state.assignment.clone();
    let mut best_cost = state.cost;
    let mut unsat_at_best = state.unsat.len();
    let mut flips_at_best = 0u64;
    // flips since the last snapshot of `best`; `None` once replaying would cost more than copying
    let mut trail: Option<Vec<u32>> = Some(Vec::new());
    let mut flips = 0u64;
    let mut ties: Vec<u32> = Vec::new();

    while flips < config.cutoff && !met(state.cost) && !state.unsat.is_empty() {
        // a lower-indexed try already met the target; this try's result is discarded
        if flips.is_multiple_of(4096) && stop_after.load(Ordering::Relaxed) < index {
            break;
        }
        let c = state.unsat[rng.random_range(0..state.unsat.len())] as usize;
        let range = state.starts[c] as usize..state.starts[c + 1] as usize;
        let mut pick = None;
        if config.noise_num > 0 && rng.random_range(0..config.noise_den) < config.noise_num {
            if config.allow_random_hard_break {
                let i = rng.random_range(range.clone());
                pick = Some(state.lits[i].unsigned_abs());
            } else {
                ties.clear();
                ties.extend(
                    state.lits[range.clone()]
                        .iter()
                        .map(|l| l.unsigned_abs())
                        .filter(|&a| state.hard_breaks[a as usize] == 0),
                );
                if !ties.is_empty() {
                    pick = Some(ties[rng.random_range(0..ties.len())]);
                }
            }
        }
        let atom = match pick {
            Some(a) => a,
            None => {
                ties.clear();
                let mut best_delta = i64::MAX;
                for &l in &state.lits[range] {
                    let a = l.unsigned_abs();
                    let d = state.delta(a);
                    if d < best_delta {
                        best_delta = d;
                        ties.clear();
                    }
                    if d == best_delta {
                        ties.push(a);
                    }
                }
                if ties.len() == 1 {
                    ties[0]
                } else {
                    ties[rng.random_range(0..ties.len())]
                }
            }
        };
        state.flip(atom);
        flips += 1;
        observer.flipped(atom, state.assignment.get(atom));
        if state.hard_unsat == 0 {
            observer.feasible(state.assignment(), state.cost);
        }
        if let Some(t) = trail.as_mut() {
            t.push(atom);
            if t.len() > atoms {
                trail = None;
            }
        }
        if state.cost < best_cost {
            match trail.as_mut() {
                Some(t) => {
                    for &a in t.iter() {
                        let v = best.get(a);
                        best.set(a, !v);
                    }
                    t.clear();
                }
                None => {
                    best.0.copy_from_slice(&state.assignment.0);
                    trail = Some(Vec::new());
                }
            }
            best_cost = state.cost;
            unsat_at_best = state.unsat.len();
            flips_at_best = flips;
        }
    }
    debug_assert_eq!(state.verify(), Ok(()));
    debug_assert_eq!(check_cost(problem, &best), best_cost);

    let target_met = met(best_cost);
    if target_met {
        stop_after.fetch_min(index, Ordering::Relaxed);
    }
    TryOutcome {
        best,
        stats: TryStats {
            lowest_cost: best_cost,
            unsat_at_lowest: unsat_at_best,
            flips_at_lowest: flips_at_best,
            flips,
            target_met,
        },
        observer,
    }
}

/// Runs all tries without an observer.
pub fn solve(problem: &Wcnf, config: &SolverConfig) -> Result<SolveResult, SolverError> {
    solve_observed(problem, config, |_| NoObserver).map(|(r, _)| r)
}

/// Runs all tries, giving each its own observer from `make_observer(try_index)`.
///
/// Tries run on the current rayon pool. When a try meets the target cost,
/// later tries are discarded (with their observers), so the result is the
/// same as a sequential run that stops at the first success.
pub fn solve_observed<O, F>(
    problem: &Wcnf,
    config: &SolverConfig,
    make_observer: F,
) -> Result<(SolveResult, Vec<O>), SolverError>
where
    O: SearchObserver + Send,
    F: Fn(usize) -> O + Sync,
{
    config.validate()?;
    if let Init::Given(a) = &config.init {
        if a.num_atoms() != problem.num_atoms() {
            return Err(SolverError::InitLength { expected: problem.num_atoms(), found: a.num_atoms() });
        }
    }
    let started = Instant::now();
    let stop_after = AtomicUsize::new(usize::MAX);
    let mut outcomes: Vec<TryOutcome<O>> = (0..config.tries)
        .into_par_iter()
        .map(|i| {
            if stop_after.load(Ordering::Relaxed) < i {
                return None;
            }
            Some(run_try(problem, config, i, make_observer(i), &stop_after))
        })
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();
    let first_success = stop_after.load(Ordering::Relaxed);
    outcomes.truncate(first_success.saturating_add(1).min(outcomes.len()));

    let seconds = started.elapsed().as_secs_f64();
    let (best_try, _) = outcomes
        .iter()
        .enumerate()
        .min_by_key(|(i, o)| (o.stats.lowest_cost, *i))
        .expect("at least one try");
    let best = outcomes[best_try].best.clone();
    let cost = check_cost(problem, &best);
    assert_eq!(cost, outcomes[best_try].stats.lowest_cost, "incremental cost disagrees with recomputation");
    let total_flips: u64 = outcomes.iter().map(|o| o.stats.flips).sum();
    let stats = SolverStats {
        tries: outcomes.iter().map(|o| o.stats.clone()).collect(),
        best_cost: cost,
        best_try,
        total_flips,
        success: config.target_cost.is_some_and(|t| cost <= t),
        target_cost: config.target_cost,
        seconds,
        flips_per_second: if seconds > 0.0 { total_flips as f64 / seconds } else { 0.0 },
    };
    let mut per_try = Vec::with_capacity(outcomes.len());
    let mut observers = Vec::with_capacity(outcomes.len());
    for o in outcomes {
        per_try.push(o.best);
        observers.push(o.observer);
    }
    Ok((SolveResult { best, cost, per_try, stats }, observers))
}
