//! Discrete Bayesian networks: a BIF reader, a versioned JSON network
//! format, ancestral sampling and exact structure scoring.
//!
//! # Accepted BIF subset
//!
//! * `network <name> { ... }`: the body (properties) is ignored.
//! * `variable <name> { type discrete [ k ] { v1, ..., vk }; }` plus any
//!   number of ignored `property ...;` statements.
//! * `probability ( child | p1, ..., pm ) { ... }` with entries
//!   - `table x1, x2, ...;`: rows of the CPT in order, parent configurations
//!     enumerated with the *last* listed parent varying fastest, and within
//!     each configuration one probability per child value,
//!   - `(l1, ..., lm) x1, ..., xk;`: one row for the named parent values,
//!   - `default x1, ..., xk;`: fills every row not given explicitly.
//!
//! Keywords are case-insensitive. `//` and `/* */` comments are skipped.
//! Every CPT row must sum to one within [`NORMALIZATION_TOLERANCE`]; rows
//! within tolerance are renormalized.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{DataError, Dataset};
use crate::scoring::{self, ScoreTable};
use crate::ParentSet;

pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

/// Bundled copy of the eight-variable `asia` network.
pub const ASIA_BIF: &str = include_str!("../data/asia.bif");

/// Bundled three-variable chain `rain -> wet -> slip`.
pub const TOY3_BIF: &str = include_str!("../data/toy3.bif");

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("syntax error at {line}:{col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("undeclared variable `{0}`")]
    UndeclaredVariable(String),
    #[error("variable `{0}` declared twice")]
    DuplicateVariable(String),
    #[error("variable `{var}` has no value `{value}`")]
    UnknownValue { var: String, value: String },
    #[error("variable `{0}` has duplicate value labels")]
    DuplicateLabel(String),
    #[error("invalid label `{0}` (labels must be non-empty without whitespace, commas or tabs)")]
    InvalidLabel(String),
    #[error("variable `{0}` has no probability block")]
    MissingCpt(String),
    #[error("variable `{0}` has more than one probability block")]
    DuplicateCpt(String),
    #[error("CPT for `{var}`: expected {expected} rows, found {found}")]
    RowCount { var: String, expected: usize, found: usize },
    #[error("CPT for `{var}`: row {row} has {found} entries, expected {expected}")]
    RowWidth { var: String, row: usize, expected: usize, found: usize },
    #[error("CPT for `{var}`: row {row} sums to {sum}")]
    NotNormalized { var: String, row: usize, sum: f64 },
    #[error("CPT for `{var}`: invalid probability {value}")]
    BadProbability { var: String, value: f64 },
    #[error("parent structure contains a directed cycle")]
    Cyclic,
    #[error("network `{0}` has no CPTs")]
    NoCpts(String),
    #[error("network and data variables differ: {0}")]
    VariableMismatch(String),
    #[error("score table has no empty parent set for `{0}`")]
    MissingEmptyParentSet(String),
    #[error("network format: {0}")]
    Format(String),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// A discrete variable and its ordered value labels.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VariableDecl {
    pub name: String,
    pub values: Vec<String>,
}

impl VariableDecl {
    pub fn new(name: impl Into<String>, values: Vec<String>) -> Self {
        VariableDecl { name: name.into(), values }
    }

    /// Variable named `name` with labels `0..arity`.
    pub fn with_arity(name: impl Into<String>, arity: usize) -> Self {
        VariableDecl::new(name, (0..arity).map(|v| v.to_string()).collect())
    }

    pub fn arity(&self) -> usize {
        self.values.len()
    }

    pub fn value_index(&self, label: &str) -> Option<usize> {
        self.values.iter().position(|v| v == label)
    }

    pub(crate) fn validate(&self) -> Result<(), NetworkError> {
        if !is_valid_label(&self.name) {
            return Err(NetworkError::InvalidLabel(self.name.clone()));
        }
        for v in &self.values {
            if !is_valid_label(v) {
                return Err(NetworkError::InvalidLabel(v.clone()));
            }
        }
        let mut seen = self.values.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.values.len() {
            return Err(NetworkError::DuplicateLabel(self.name.clone()));
        }
        if self.values.is_empty() {
            return Err(NetworkError::Format(format!("variable `{}` has no values", self.name)));
        }
        if self.values.len() == 1 {
            log::warn!("variable `{}` has a single value", self.name);
        }
        Ok(())
    }
}

pub(crate) fn is_valid_label(s: &str) -> bool {
    !s.is_empty() && !s.chars().any(|c| c.is_whitespace() || c == ',' || c == '|')
}

/// One conditional distribution per joint parent instantiation.
pub type Cpt = Vec<Vec<f64>>;

/// A discrete Bayesian network. CPTs are optional so that learned
/// structures can share the type.
#[derive(Clone, Debug, PartialEq)]
pub struct BayesNet {
    name: String,
    variables: Vec<VariableDecl>,
    parents: Vec<Vec<usize>>,
    cpts: Option<Vec<Cpt>>,
}

impl BayesNet {
    /// Validates arities, acyclicity and (when present) CPT shapes and
    /// normalization.
    pub fn new(
        name: impl Into<String>,
        variables: Vec<VariableDecl>,
        parents: Vec<Vec<usize>>,
        cpts: Option<Vec<Cpt>>,
    ) -> Result<Self, NetworkError> {
        let name = name.into();
        if parents.len() != variables.len() {
            return Err(NetworkError::Format("parent list count differs from variable count".into()));
        }
        let mut names: Vec<&str> = variables.iter().map(|v| v.name.as_str()).collect();
        names.sort();
        if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
            return Err(NetworkError::DuplicateVariable(w[0].to_string()));
        }
        for v in &variables {
            v.validate()?;
        }
        for (i, ps) in parents.iter().enumerate() {
            let mut sorted = ps.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != ps.len() || ps.iter().any(|&p| p >= variables.len() || p == i) {
                return Err(NetworkError::Format(format!(
                    "invalid parent list for `{}`",
                    variables[i].name
                )));
            }
        }
        let mut net = BayesNet { name, variables, parents, cpts: None };
        net.topological_order()?;
        if let Some(mut cpts) = cpts {
            if cpts.len() != net.variables.len() {
                return Err(NetworkError::Format("CPT count differs from variable count".into()));
            }
            for (i, cpt) in cpts.iter_mut().enumerate() {
                net.check_cpt(i, cpt)?;
            }
            net.cpts = Some(cpts);
        }
        Ok(net)
    }

    fn check_cpt(&self, i: usize, cpt: &mut Cpt) -> Result<(), NetworkError> {
        let var = &self.variables[i].name;
        let q = self.parent_configurations(i);
        let r = self.variables[i].arity();
        if cpt.len() != q {
            return Err(NetworkError::RowCount { var: var.clone(), expected: q, found: cpt.len() });
        }
        for (j, row) in cpt.iter_mut().enumerate() {
            if row.len() != r {
                return Err(NetworkError::RowWidth {
                    var: var.clone(),
                    row: j,
                    expected: r,
                    found: row.len(),
                });
            }
            if let Some(&bad) = row.iter().find(|p| !p.is_finite() || **p < 0.0) {
                return Err(NetworkError::BadProbability { var: var.clone(), value: bad });
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > NORMALIZATION_TOLERANCE {
                return Err(NetworkError::NotNormalized { var: var.clone(), row: j, sum });
            }
            if sum != 1.0 {
                row.iter_mut().for_each(|p| *p /= sum);
            }
        }
        Ok(())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn variables(&self) -> &[VariableDecl] {
        &self.variables
    }

    pub fn num_variables(&self) -> usize {
        self.variables.len()
    }

    pub fn parents(&self, i: usize) -> &[usize] {
        &self.parents[i]
    }

    pub fn all_parents(&self) -> &[Vec<usize>] {
        &self.parents
    }

    pub fn cpts(&self) -> Option<&[Cpt]> {
        self.cpts.as_deref()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|v| v.name == name)
    }

    pub fn max_parents(&self) -> usize {
        self.parents.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn max_arity(&self) -> usize {
        self.variables.iter().map(VariableDecl::arity).max().unwrap_or(0)
    }

    /// Number of joint instantiations of the parents of `i` (q_i).
    pub fn parent_configurations(&self, i: usize) -> usize {
        self.parents[i].iter().map(|&p| self.variables[p].arity()).product()
    }

    /// Same structure with CPTs dropped.
    pub fn structure_only(&self) -> BayesNet {
        BayesNet { cpts: None, ..self.clone() }
    }

    /// Kahn's algorithm; errors if the parent graph has a cycle.
    pub fn topological_order(&self) -> Result<Vec<usize>, NetworkError> {
        topological_order(&self.parents).ok_or(NetworkError::Cyclic)
    }

    /// Row index of a parent instantiation, last parent varying fastest.
    fn row_index(&self, i: usize, values: &[u32]) -> usize {
        self.parents[i]
            .iter()
            .fold(0usize, |acc, &p| acc * self.variables[p].arity() + values[p] as usize)
    }

    /// Serializes to the versioned JSON network format.
    pub fn to_json(&self) -> String {
        let doc = NetworkDoc {
            format: NETWORK_FORMAT.to_string(),
            version: NETWORK_FORMAT_VERSION,
            name: self.name.clone(),
            variables: self
                .variables
                .iter()
                .enumerate()
                .map(|(i, v)| VariableDoc {
                    name: v.name.clone(),
                    values: v.values.clone(),
                    parents: self.parents[i].iter().map(|&p| self.variables[p].name.clone()).collect(),
                    cpt: self.cpts.as_ref().map(|c| c[i].clone()),
                })
                .collect(),
        };
        let mut s = serde_json::to_string_pretty(&doc).expect("network serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, NetworkError> {
        let doc: NetworkDoc =
            serde_json::from_str(text).map_err(|e| NetworkError::Format(e.to_string()))?;
        if doc.format != NETWORK_FORMAT {
            return Err(NetworkError::Format(format!("unexpected format tag `{}`", doc.format)));
        }
        if doc.version != NETWORK_FORMAT_VERSION {
            return Err(NetworkError::Format(format!("unsupported version {}", doc.version)));
        }
        let variables: Vec<VariableDecl> = doc
            .variables
            .iter()
            .map(|v| VariableDecl::new(v.name.clone(), v.values.clone()))
            .collect();
        let lookup = |name: &str| {
            variables
                .iter()
                .position(|v| v.name == name)
                .ok_or_else(|| NetworkError::UndeclaredVariable(name.to_string()))
        };
        let parents = doc
            .variables
            .iter()
            .map(|v| v.parents.iter().map(|p| lookup(p)).collect::<Result<Vec<_>, _>>())
            .collect::<Result<Vec<_>, _>>()?;
        let has_cpts = doc.variables.iter().filter(|v| v.cpt.is_some()).count();
        let cpts = if has_cpts == 0 {
            None
        } else if has_cpts == doc.variables.len() {
            Some(doc.variables.into_iter().map(|v| v.cpt.unwrap()).collect())
        } else {
            return Err(NetworkError::Format("either all or no variables carry a CPT".into()));
        };
        BayesNet::new(doc.name, variables, parents, cpts)
    }
}

pub const NETWORK_FORMAT: &str = "bnsat-network";
pub const NETWORK_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct NetworkDoc {
    format: String,
    version: u32,
    name: String,
    variables: Vec<VariableDoc>,
}

#[derive(Serialize, Deserialize)]
struct VariableDoc {
    name: String,
    values: Vec<String>,
    parents: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    cpt: Option<Cpt>,
}

/// Topological order of a parent-list graph, or `None` when cyclic.
pub fn topological_order(parents: &[Vec<usize>]) -> Option<Vec<usize>> {
    let n = parents.len();
    let mut indegree: Vec<usize> = parents.iter().map(Vec::len).collect();
    let mut children = vec![Vec::new(); n];
    for (c, ps) in parents.iter().enumerate() {
        for &p in ps {
            children[p].push(c);
        }
    }
    let mut ready: Vec<usize> = (0..n).rev().filter(|&i| indegree[i] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(v) = ready.pop() {
        order.push(v);
        for &c in &children[v] {
            indegree[c] -= 1;
            if indegree[c] == 0 {
                ready.push(c);
            }
        }
    }
    (order.len() == n).then_some(order)
}

// ---------------------------------------------------------------------------
// BIF parsing

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Word(String),
    Str(String),
    Punct(char),
}

#[derive(Clone, Debug)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

fn tokenize(text: &str) -> Result<Vec<Token>, NetworkError> {
    let chars: Vec<char> = text.chars().collect();
    let mut toks = Vec::new();
    let (mut i, mut line, mut col) = (0, 1, 1);
    let advance = |c: char, line: &mut usize, col: &mut usize| {
        if c == '\n' {
            *line += 1;
            *col = 1;
        } else {
            *col += 1;
        }
    };
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            advance(c, &mut line, &mut col);
            i += 1;
        } else if c == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                advance(chars[i], &mut line, &mut col);
                i += 1;
            }
        } else if c == '/' && chars.get(i + 1) == Some(&'*') {
            let (sl, sc) = (line, col);
            i += 2;
            col += 2;
            loop {
                if i + 1 >= chars.len() {
                    return Err(NetworkError::Syntax { line: sl, col: sc, msg: "unterminated comment".into() });
                }
                if chars[i] == '*' && chars[i + 1] == '/' {
                    i += 2;
                    col += 2;
                    break;
                }
                advance(chars[i], &mut line, &mut col);
                i += 1;
            }
        } else if c == '"' {
            let (sl, sc) = (line, col);
            let mut s = String::new();
            i += 1;
            col += 1;
            loop {
                match chars.get(i) {
                    None => {
                        return Err(NetworkError::Syntax { line: sl, col: sc, msg: "unterminated string".into() })
                    }
                    Some('"') => {
                        i += 1;
                        col += 1;
                        break;
                    }
                    Some(&ch) => {
                        s.push(ch);
                        advance(ch, &mut line, &mut col);
                        i += 1;
                    }
                }
            }
            toks.push(Token { tok: Tok::Str(s), line: sl, col: sc });
        } else if "{}()[];,|=".contains(c) {
            toks.push(Token { tok: Tok::Punct(c), line, col });
            i += 1;
            col += 1;
        } else {
            let (sl, sc) = (line, col);
            let mut s = String::new();
            while i < chars.len() && !chars[i].is_whitespace() && !"{}()[];,|=\"".contains(chars[i]) {
                if chars[i] == '/' && matches!(chars.get(i + 1), Some('/') | Some('*')) {
                    break;
                }
                s.push(chars[i]);
                i += 1;
                col += 1;
            }
            toks.push(Token { tok: Tok::Word(s), line: sl, col: sc });
        }
    }
    Ok(toks)
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    end: (usize, usize),
}

impl Parser {
    fn err<T>(&self, msg: impl Into<String>) -> Result<T, NetworkError> {
        let (line, col) = self.toks.get(self.pos).map_or(self.end, |t| (t.line, t.col));
        Err(NetworkError::Syntax { line, col, msg: msg.into() })
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|t| t.tok.clone());
        self.pos += 1;
        t
    }

    fn at_punct(&self, c: char) -> bool {
        self.peek() == Some(&Tok::Punct(c))
    }

    fn expect_punct(&mut self, c: char) -> Result<(), NetworkError> {
        if self.at_punct(c) {
            self.pos += 1;
            Ok(())
        } else {
            self.err(format!("expected `{c}`"))
        }
    }

    fn expect_name(&mut self) -> Result<String, NetworkError> {
        match self.peek() {
            Some(Tok::Word(w)) | Some(Tok::Str(w)) => {
                let w = w.clone();
                self.pos += 1;
                Ok(w)
            }
            _ => self.err("expected a name"),
        }
    }

    fn expect_keyword(&mut self, kw: &str) -> Result<(), NetworkError> {
        match self.peek() {
            Some(Tok::Word(w)) if w.eq_ignore_ascii_case(kw) => {
                self.pos += 1;
                Ok(())
            }
            _ => self.err(format!("expected `{kw}`")),
        }
    }

    fn at_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Tok::Word(w)) if w.eq_ignore_ascii_case(kw))
    }

    fn number(&mut self) -> Result<f64, NetworkError> {
        match self.peek() {
            Some(Tok::Word(w)) => match w.parse::<f64>() {
                Ok(x) => {
                    self.pos += 1;
                    Ok(x)
                }
                Err(_) => self.err(format!("expected a number, found `{w}`")),
            },
            _ => self.err("expected a number"),
        }
    }

    /// Numbers separated by optional commas, up to `;`.
    fn numbers_until_semicolon(&mut self) -> Result<Vec<f64>, NetworkError> {
        let mut out = Vec::new();
        loop {
            if self.at_punct(';') {
                self.pos += 1;
                return Ok(out);
            }
            if self.at_punct(',') {
                self.pos += 1;
                continue;
            }
            out.push(self.number()?);
        }
    }

    fn skip_statement(&mut self) -> Result<(), NetworkError> {
        loop {
            match self.next() {
                Some(Tok::Punct(';')) => return Ok(()),
                Some(_) => {}
                None => return self.err("unexpected end of input"),
            }
        }
    }

    /// Skips a balanced `{ ... }` block.
    fn skip_block(&mut self) -> Result<(), NetworkError> {
        self.expect_punct('{')?;
        let mut depth = 1;
        while depth > 0 {
            match self.next() {
                Some(Tok::Punct('{')) => depth += 1,
                Some(Tok::Punct('}')) => depth -= 1,
                Some(_) => {}
                None => return self.err("unbalanced braces"),
            }
        }
        Ok(())
    }
}

struct ProbBlock {
    child: String,
    parents: Vec<String>,
    table: Option<Vec<f64>>,
    rows: Vec<(Vec<String>, Vec<f64>)>,
    default: Option<Vec<f64>>,
}

/// Parses BIF text into a validated network; variable order follows
/// declaration order.
pub fn parse_bif(text: &str) -> Result<BayesNet, NetworkError> {
    let toks = tokenize(text)?;
    let end = toks.last().map_or((1, 1), |t| (t.line, t.col + 1));
    let mut p = Parser { toks, pos: 0, end };
    let mut name = String::from("unnamed");
    let mut variables: Vec<VariableDecl> = Vec::new();
    let mut blocks: Vec<ProbBlock> = Vec::new();

    while p.peek().is_some() {
        if p.at_keyword("network") {
            p.pos += 1;
            name = p.expect_name()?;
            p.skip_block()?;
        } else if p.at_keyword("variable") {
            p.pos += 1;
            let vname = p.expect_name()?;
            if variables.iter().any(|v| v.name == vname) {
                return Err(NetworkError::DuplicateVariable(vname));
            }
            p.expect_punct('{')?;
            let mut values = None;
            while !p.at_punct('}') {
                if p.at_keyword("type") {
                    p.pos += 1;
                    p.expect_keyword("discrete")?;
                    p.expect_punct('[')?;
                    let k = p.number()?;
                    p.expect_punct(']')?;
                    p.expect_punct('{')?;
                    let mut labels = Vec::new();
                    while !p.at_punct('}') {
                        if p.at_punct(',') {
                            p.pos += 1;
                            continue;
                        }
                        labels.push(p.expect_name()?);
                    }
                    p.expect_punct('}')?;
                    p.expect_punct(';')?;
                    if k < 1.0 || k.fract() != 0.0 || k as usize != labels.len() {
                        return p.err(format!(
                            "variable `{vname}` declares {k} values but lists {}",
                            labels.len()
                        ));
                    }
                    values = Some(labels);
                } else if p.at_keyword("property") {
                    p.skip_statement()?;
                } else if p.peek().is_none() {
                    return p.err("unexpected end of input");
                } else {
                    return p.err("expected `type` or `property`");
                }
            }
            p.expect_punct('}')?;
            match values {
                Some(values) => variables.push(VariableDecl::new(vname, values)),
                None => return p.err(format!("variable `{vname}` has no discrete type")),
            }
        } else if p.at_keyword("probability") {
            p.pos += 1;
            p.expect_punct('(')?;
            let child = p.expect_name()?;
            let mut parents = Vec::new();
            if p.at_punct('|') {
                p.pos += 1;
                while !p.at_punct(')') {
                    if p.at_punct(',') {
                        p.pos += 1;
                        continue;
                    }
                    parents.push(p.expect_name()?);
                }
            }
            p.expect_punct(')')?;
            p.expect_punct('{')?;
            let mut block = ProbBlock { child, parents, table: None, rows: Vec::new(), default: None };
            while !p.at_punct('}') {
                if p.at_keyword("table") {
                    p.pos += 1;
                    block.table = Some(p.numbers_until_semicolon()?);
                } else if p.at_keyword("default") {
                    p.pos += 1;
                    block.default = Some(p.numbers_until_semicolon()?);
                } else if p.at_keyword("property") {
                    p.skip_statement()?;
                } else if p.at_punct('(') {
                    p.pos += 1;
                    let mut labels = Vec::new();
                    while !p.at_punct(')') {
                        if p.at_punct(',') {
                            p.pos += 1;
                            continue;
                        }
                        labels.push(p.expect_name()?);
                    }
                    p.expect_punct(')')?;
                    let probs = p.numbers_until_semicolon()?;
                    block.rows.push((labels, probs));
                } else if p.peek().is_none() {
                    return p.err("unexpected end of input");
                } else {
                    return p.err("expected `table`, `default`, `property` or a parent row");
                }
            }
            p.expect_punct('}')?;
            blocks.push(block);
        } else {
            return p.err("expected `network`, `variable` or `probability`");
        }
    }

    assemble(name, variables, blocks)
}

fn assemble(name: String, variables: Vec<VariableDecl>, blocks: Vec<ProbBlock>) -> Result<BayesNet, NetworkError> {
    let index: HashMap<&str, usize> =
        variables.iter().enumerate().map(|(i, v)| (v.name.as_str(), i)).collect();
    let lookup = |n: &str| index.get(n).copied().ok_or_else(|| NetworkError::UndeclaredVariable(n.to_string()));
    let n = variables.len();
    let mut parents: Vec<Option<Vec<usize>>> = vec![None; n];
    let mut cpts: Vec<Option<Cpt>> = vec![None; n];

    for block in blocks {
        let c = lookup(&block.child)?;
        if parents[c].is_some() {
            return Err(NetworkError::DuplicateCpt(block.child));
        }
        let ps = block.parents.iter().map(|p| lookup(p)).collect::<Result<Vec<_>, _>>()?;
        let r = variables[c].arity();
        let q: usize = ps.iter().map(|&p| variables[p].arity()).product();
        let mut rows: Vec<Option<Vec<f64>>> = vec![None; q];
        if let Some(table) = block.table {
            if table.len() != q * r {
                return Err(NetworkError::RowCount { var: block.child, expected: q, found: table.len() / r.max(1) });
            }
            for (j, row) in table.chunks(r).enumerate() {
                rows[j] = Some(row.to_vec());
            }
        }
        for (labels, probs) in block.rows {
            if labels.len() != ps.len() {
                return Err(NetworkError::Format(format!(
                    "CPT row for `{}` names {} parent values, expected {}",
                    block.child,
                    labels.len(),
                    ps.len()
                )));
            }
            let mut j = 0;
            for (&pv, label) in ps.iter().zip(&labels) {
                let k = variables[pv].value_index(label).ok_or_else(|| NetworkError::UnknownValue {
                    var: variables[pv].name.clone(),
                    value: label.clone(),
                })?;
                j = j * variables[pv].arity() + k;
            }
            rows[j] = Some(probs);
        }
        if let Some(default) = block.default {
            for row in rows.iter_mut().filter(|r| r.is_none()) {
                *row = Some(default.clone());
            }
        }
        let found = rows.iter().filter(|r| r.is_some()).count();
        if found != q {
            return Err(NetworkError::RowCount { var: block.child, expected: q, found });
        }
        parents[c] = Some(ps);
        cpts[c] = Some(rows.into_iter().map(Option::unwrap).collect());
    }

    let mut out_parents = Vec::with_capacity(n);
    let mut out_cpts = Vec::with_capacity(n);
    for (i, (ps, cpt)) in parents.into_iter().zip(cpts).enumerate() {
        match (ps, cpt) {
            (Some(ps), Some(cpt)) => {
                out_parents.push(ps);
                out_cpts.push(cpt);
            }
            _ => return Err(NetworkError::MissingCpt(variables[i].name.clone())),
        }
    }
    BayesNet::new(name, variables, out_parents, Some(out_cpts))
}

// ---------------------------------------------------------------------------
// Sampling and scoring

/// Draws `n_rows` joint instantiations by ancestral sampling.
///
/// Uses ChaCha8 seeded with `seed` (via `SeedableRng::seed_from_u64`); each
/// variable consumes one uniform `f64` per row, in topological order, and
/// takes the first value whose cumulative probability exceeds it.
pub fn forward_sample(net: &BayesNet, n_rows: u64, seed: u64) -> Result<Dataset, NetworkError> {
    let cpts = net.cpts().ok_or_else(|| NetworkError::NoCpts(net.name().to_string()))?;
    let order = net.topological_order()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Dataset::empty(net.variables().to_vec())?;
    let mut values = vec![0u32; net.num_variables()];
    for _ in 0..n_rows {
        for &v in &order {
            let row = &cpts[v][net.row_index(v, &values)];
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut pick = None;
            for (k, &p) in row.iter().enumerate() {
                acc += p;
                if u < acc && p > 0.0 {
                    pick = Some(k);
                    break;
                }
            }
            // Rounding can leave `acc` just below one; fall back to the last
            // value with positive mass.
            let k = pick.unwrap_or_else(|| row.iter().rposition(|&p| p > 0.0).unwrap_or(0));
            values[v] = k as u32;
        }
        data.add(&values, 1)?;
    }
    Ok(data)
}

fn check_same_variables(a: &[VariableDecl], b: &[VariableDecl]) -> Result<(), NetworkError> {
    if a.len() != b.len() {
        return Err(NetworkError::VariableMismatch(format!("{} vs {} variables", a.len(), b.len())));
    }
    for (x, y) in a.iter().zip(b) {
        if x.name != y.name || x.arity() != y.arity() {
            return Err(NetworkError::VariableMismatch(format!(
                "`{}` (arity {}) vs `{}` (arity {})",
                x.name,
                x.arity(),
                y.name,
                y.arity()
            )));
        }
    }
    Ok(())
}

/// Exact log BDeu score of the network's structure on `data`, with no cap on
/// parent-set size.
pub fn true_score(net: &BayesNet, data: &Dataset, alpha: f64) -> Result<f64, NetworkError> {
    check_same_variables(net.variables(), data.schema())?;
    let mut total = 0.0;
    for i in 0..net.num_variables() {
        let pa = ParentSet::new(net.parents(i).to_vec());
        let fa = pa.with(i);
        total += scoring::log_h(data, fa.as_slice(), alpha)? - scoring::log_h(data, pa.as_slice(), alpha)?;
    }
    Ok(total)
}

/// Replaces each parent set by its highest-scoring subset present in
/// `scores`. Ties go to the entry listed first (smaller sets come first).
pub fn target_network(net: &BayesNet, scores: &ScoreTable) -> Result<BayesNet, NetworkError> {
    check_same_variables(net.variables(), scores.variables())?;
    let mut parents = Vec::with_capacity(net.num_variables());
    for i in 0..net.num_variables() {
        let truth = ParentSet::new(net.parents(i).to_vec());
        if scores.score(i, &ParentSet::empty()).is_none() {
            return Err(NetworkError::MissingEmptyParentSet(net.variables()[i].name.clone()));
        }
        let mut best: Option<(&ParentSet, f64)> = None;
        for (pa, s) in scores.entries(i) {
            if pa.is_subset_of(&truth) && best.is_none_or(|(_, b)| s > b) {
                best = Some((pa, s));
            }
        }
        parents.push(best.expect("empty set is a subset").0.as_slice().to_vec());
    }
    BayesNet::new(format!("{}-target", net.name()), net.variables().to_vec(), parents, None)
}

#[cfg(test)]
mod tests {
    use super::*;

    const ONE_VAR: &str = "network tiny { }\nvariable A { type discrete [ 2 ] { a0, a1 }; }\nprobability ( A ) { table 0.3, 0.7; }\n";

    #[test]
    fn minimal_network() {
        let net = parse_bif(ONE_VAR).unwrap();
        assert_eq!(net.num_variables(), 1);
        assert_eq!(net.variables()[0].arity(), 2);
        assert_eq!(net.cpts().unwrap()[0], vec![vec![0.3, 0.7]]);
    }

    #[test]
    fn asia_shape() {
        let net = parse_bif(ASIA_BIF).unwrap();
        assert_eq!(net.num_variables(), 8);
        assert_eq!(net.max_parents(), 2);
        assert_eq!(net.max_arity(), 2);
        let either = net.index_of("either").unwrap();
        let names: Vec<&str> = net.parents(either).iter().map(|&p| net.variables()[p].name.as_str()).collect();
        assert_eq!(names, vec!["lung", "tub"]);
    }

    #[test]
    fn unnormalized_row_rejected() {
        let text = ONE_VAR.replace("0.3, 0.7", "0.2, 0.7");
        assert!(matches!(parse_bif(&text), Err(NetworkError::NotNormalized { .. })));
    }

    #[test]
    fn near_normalized_row_is_rescaled() {
        let text = ONE_VAR.replace("0.3, 0.7", "0.3, 0.7000000000005");
        let net = parse_bif(&text).unwrap();
        let row = &net.cpts().unwrap()[0][0];
        assert_eq!(row.iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn undeclared_variable() {
        let text = format!("{ONE_VAR}probability ( B | A ) {{ table 0.5, 0.5, 0.5, 0.5; }}");
        assert!(matches!(parse_bif(&text), Err(NetworkError::UndeclaredVariable(v)) if v == "B"));
    }

    #[test]
    fn row_count_mismatch() {
        let text = "variable A { type discrete [ 2 ] { a, b }; }\nvariable B { type discrete [ 2 ] { a, b }; }\n\
                    probability ( A ) { table 0.5, 0.5; }\nprobability ( B | A ) { (a) 0.5, 0.5; }";
        assert!(matches!(parse_bif(text), Err(NetworkError::RowCount { expected: 2, found: 1, .. })));
    }

    #[test]
    fn cycle_rejected() {
        let text = "variable A { type discrete [ 2 ] { a, b }; }\nvariable B { type discrete [ 2 ] { a, b }; }\n\
                    probability ( A | B ) { table 0.5, 0.5, 0.5, 0.5; }\nprobability ( B | A ) { table 0.5, 0.5, 0.5, 0.5; }";
        assert!(matches!(parse_bif(text), Err(NetworkError::Cyclic)));
    }

    #[test]
    fn syntax_error_position() {
        let text = "variable A {\n  type discrete [ 2 ] { a, b }\n}";
        match parse_bif(text) {
            Err(NetworkError::Syntax { line, col, .. }) => assert_eq!((line, col), (3, 1)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn keywords_case_insensitive_and_comments() {
        let text = "/* header */ NETWORK x { property \"a; b\" ; }\n// c\nVARIABLE A { TYPE Discrete[2]{a,b}; PROPERTY pos = (1, 2); }\n\
                    Probability(A){ Table 0.25 0.75; }";
        let net = parse_bif(text).unwrap();
        assert_eq!(net.name(), "x");
        assert_eq!(net.cpts().unwrap()[0][0], vec![0.25, 0.75]);
    }

    #[test]
    fn table_and_row_forms_agree() {
        let head = "variable A { type discrete [ 2 ] { a, b }; }\nvariable B { type discrete [ 3 ] { x, y, z }; }\n\
                    variable C { type discrete [ 2 ] { u, v }; }\nprobability ( A ) { table 0.5, 0.5; }\n\
                    probability ( B ) { table 0.2, 0.3, 0.5; }\n";
        let table = format!(
            "{head}probability ( C | A, B ) {{ table 0.1, 0.9, 0.2, 0.8, 0.3, 0.7, 0.4, 0.6, 0.5, 0.5, 0.6, 0.4; }}"
        );
        let rows = format!(
            "{head}probability ( C | A, B ) {{ (a, x) 0.1, 0.9; (a, y) 0.2, 0.8; (a, z) 0.3, 0.7; (b, x) 0.4, 0.6; default 0.55, 0.45; (b, z) 0.6, 0.4; (b, y) 0.5, 0.5; }}"
        );
        assert_eq!(parse_bif(&table).unwrap(), parse_bif(&rows).unwrap());
    }

    #[test]
    fn json_roundtrip_asia() {
        let net = parse_bif(ASIA_BIF).unwrap();
        let back = BayesNet::from_json(&net.to_json()).unwrap();
        assert_eq!(net, back);
        let s = net.structure_only();
        assert_eq!(BayesNet::from_json(&s.to_json()).unwrap(), s);
    }

    #[test]
    fn deterministic_net_gives_single_row() {
        let text = "variable A { type discrete [ 2 ] { a, b }; }\nvariable B { type discrete [ 2 ] { a, b }; }\n\
                    probability ( A ) { table 0.0, 1.0; }\nprobability ( B | A ) { table 1.0, 0.0, 1.0, 0.0; }";
        let net = parse_bif(text).unwrap();
        let data = forward_sample(&net, 100, 7).unwrap();
        assert_eq!(data.distinct(), 1);
        assert_eq!(data.total(), 100);
        assert_eq!(data.count(&[1, 0]), 100);
    }

    #[test]
    fn sampling_total_and_reproducibility() {
        let net = parse_bif(ASIA_BIF).unwrap();
        let a = forward_sample(&net, 52, 3).unwrap();
        let b = forward_sample(&net, 52, 3).unwrap();
        assert_eq!(a.total(), 52);
        assert_eq!(a, b);
        assert_ne!(a, forward_sample(&net, 52, 4).unwrap());
    }

    #[test]
    fn true_score_of_single_variable() {
        let net = parse_bif(ONE_VAR).unwrap();
        let mut data = Dataset::empty(net.variables().to_vec()).unwrap();
        assert_eq!(true_score(&net, &data, 1.0).unwrap(), 0.0);
        data.add(&[0], 3).unwrap();
        data.add(&[1], 1).unwrap();
        let expected = (1.875f64 * 0.5 / 24.0).ln();
        assert!((true_score(&net, &data, 1.0).unwrap() - expected).abs() < 1e-12);
        assert!((expected - (-3.2426)).abs() < 1e-4);
    }

    #[test]
    fn true_score_rejects_mismatched_schema() {
        let net = parse_bif(ONE_VAR).unwrap();
        let data = Dataset::empty(vec![VariableDecl::with_arity("Z", 2)]).unwrap();
        assert!(matches!(true_score(&net, &data, 1.0), Err(NetworkError::VariableMismatch(_))));
    }
}
