//! Complete discrete data stored as distinct joint instantiations with
//! multiplicities, plus contingency counts over variable subsets.
//!
//! # Count-table text format
//!
//! ```text
//! # bnsat-counts v1
//! # variable <name> <label> <label> ...
//! <label>,<label>,...<TAB><count>
//! ```
//!
//! One `# variable` line per column, in schema order, then one line per
//! distinct instantiation sorted by value-index vector.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::bif::{is_valid_label, VariableDecl};
use crate::digest::digest_text;

pub const COUNTS_HEADER: &str = "# bnsat-counts v1";

#[derive(Debug, Error)]
pub enum DataError {
    #[error("line {line}: expected {expected} fields, found {found}")]
    Ragged { line: usize, expected: usize, found: usize },
    #[error("line {line}: value `{value}` not in the schema of `{column}`")]
    UnknownValue { line: usize, column: String, value: String },
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("instantiation {0:?} does not fit the schema")]
    BadInstantiation(Vec<u32>),
    #[error("counts must be positive")]
    ZeroCount,
    #[error("variable index {0} repeated in subset")]
    DuplicateIndex(usize),
    #[error("variable index {0} out of range")]
    IndexOutOfRange(usize),
    #[error("subset has more joint instantiations than fit in 64 bits")]
    CellSpaceOverflow,
    #[error("line {line}: {msg}")]
    Format { line: usize, msg: String },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// Complete data: a count for every distinct joint instantiation observed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dataset {
    schema: Vec<VariableDecl>,
    rows: BTreeMap<Vec<u32>, u64>,
    total: u64,
}

fn check_schema(schema: &[VariableDecl]) -> Result<(), DataError> {
    let mut names: Vec<&str> = schema.iter().map(|v| v.name.as_str()).collect();
    names.sort();
    if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
        return Err(DataError::InvalidSchema(format!("duplicate variable `{}`", w[0])));
    }
    for v in schema {
        if !is_valid_label(&v.name) || v.values.is_empty() {
            return Err(DataError::InvalidSchema(format!("bad variable `{}`", v.name)));
        }
        if let Some(bad) = v.values.iter().find(|l| !is_valid_label(l)) {
            return Err(DataError::InvalidSchema(format!("bad label `{bad}` for `{}`", v.name)));
        }
        let mut vals = v.values.clone();
        vals.sort();
        vals.dedup();
        if vals.len() != v.values.len() {
            return Err(DataError::InvalidSchema(format!("duplicate labels for `{}`", v.name)));
        }
    }
    Ok(())
}

impl Dataset {
    /// A dataset with no rows.
    pub fn empty(schema: Vec<VariableDecl>) -> Result<Self, DataError> {
        check_schema(&schema)?;
        Ok(Dataset { schema, rows: BTreeMap::new(), total: 0 })
    }

    /// Adds `count` copies of `values` (one value index per variable).
    pub fn add(&mut self, values: &[u32], count: u64) -> Result<(), DataError> {
        if count == 0 {
            return Err(DataError::ZeroCount);
        }
        if values.len() != self.schema.len()
            || values.iter().zip(&self.schema).any(|(&v, d)| v as usize >= d.arity())
        {
            return Err(DataError::BadInstantiation(values.to_vec()));
        }
        *self.rows.entry(values.to_vec()).or_insert(0) += count;
        self.total += count;
        Ok(())
    }

    pub fn schema(&self) -> &[VariableDecl] {
        &self.schema
    }

    pub fn num_variables(&self) -> usize {
        self.schema.len()
    }

    /// N, the number of data points.
    pub fn total(&self) -> u64 {
        self.total
    }

    /// Number of distinct joint instantiations.
    pub fn distinct(&self) -> usize {
        self.rows.len()
    }

    pub fn count(&self, values: &[u32]) -> u64 {
        self.rows.get(values).copied().unwrap_or(0)
    }

    /// Distinct instantiations with counts, sorted by value-index vector.
    pub fn rows(&self) -> impl Iterator<Item = (&[u32], u64)> {
        self.rows.iter().map(|(k, &c)| (k.as_slice(), c))
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.schema.iter().position(|v| v.name == name)
    }

    /// Reads CSV with a header row of variable names and one instantiation
    /// per row. Cells may be value labels or integer value indices.
    ///
    /// Without a schema, each column's labels are the distinct observed
    /// values, sorted numerically when all are integers and lexically
    /// otherwise. With a schema, its arities and label order win and the
    /// columns may appear in any order.
    pub fn ingest_csv(text: &str, schema: Option<&[VariableDecl]>) -> Result<Self, DataError> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
        let mut records = Vec::new();
        for (i, rec) in reader.records().enumerate() {
            let rec = rec?;
            if rec.len() != header.len() {
                return Err(DataError::Ragged { line: i + 2, expected: header.len(), found: rec.len() });
            }
            records.push(rec);
        }

        let schema: Vec<VariableDecl> = match schema {
            Some(s) => s.to_vec(),
            None => header
                .iter()
                .enumerate()
                .map(|(c, name)| {
                    let mut labels: Vec<String> = records.iter().map(|r| r[c].to_string()).collect();
                    labels.sort();
                    labels.dedup();
                    if labels.iter().all(|l| l.parse::<i64>().is_ok()) {
                        labels.sort_by_key(|l| l.parse::<i64>().unwrap());
                    }
                    VariableDecl::new(name.clone(), labels)
                })
                .collect(),
        };
        // column in the file for each schema variable
        let columns = schema
            .iter()
            .map(|v| {
                header
                    .iter()
                    .position(|h| *h == v.name)
                    .ok_or_else(|| DataError::InvalidSchema(format!("no column for `{}`", v.name)))
            })
            .collect::<Result<Vec<_>, _>>()?;
        if header.len() != schema.len() {
            return Err(DataError::InvalidSchema("header and schema have different columns".into()));
        }

        let mut data = Dataset::empty(schema)?;
        let mut values = vec![0u32; data.schema.len()];
        for (i, rec) in records.iter().enumerate() {
            for (v, &c) in columns.iter().enumerate() {
                let decl = &data.schema[v];
                let cell = &rec[c];
                let k = decl
                    .value_index(cell)
                    .or_else(|| cell.parse::<usize>().ok().filter(|&k| k < decl.arity()))
                    .ok_or_else(|| DataError::UnknownValue {
                        line: i + 2,
                        column: decl.name.clone(),
                        value: cell.to_string(),
                    })?;
                values[v] = k as u32;
            }
            data.add(&values, 1)?;
        }
        Ok(data)
    }

    /// Expands the counts into CSV, one line per data point.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let names: Vec<&str> = self.schema.iter().map(|v| v.name.as_str()).collect();
        out.push_str(&names.join(","));
        out.push('\n');
        for (values, count) in self.rows() {
            let line = self.label_key(values);
            for _ in 0..count {
                out.push_str(&line);
                out.push('\n');
            }
        }
        out
    }

    fn label_key(&self, values: &[u32]) -> String {
        values
            .iter()
            .zip(&self.schema)
            .map(|(&k, d)| d.values[k as usize].as_str())
            .collect::<Vec<_>>()
            .join(",")
    }

    /// The count-table text format described in the module docs.
    pub fn to_count_text(&self) -> String {
        let mut out = String::new();
        out.push_str(COUNTS_HEADER);
        out.push('\n');
        for v in &self.schema {
            out.push_str("# variable ");
            out.push_str(&v.name);
            for l in &v.values {
                out.push(' ');
                out.push_str(l);
            }
            out.push('\n');
        }
        for (values, count) in self.rows() {
            out.push_str(&self.label_key(values));
            out.push('\t');
            out.push_str(&count.to_string());
            out.push('\n');
        }
        out
    }

    pub fn from_count_text(text: &str) -> Result<Self, DataError> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, l)) if l.trim_end() == COUNTS_HEADER => {}
            _ => return Err(DataError::Format { line: 1, msg: format!("expected `{COUNTS_HEADER}`") }),
        }
        let mut schema = Vec::new();
        let mut data: Option<Dataset> = None;
        for (i, line) in lines {
            let line_no = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("# variable ") {
                if data.is_some() {
                    return Err(DataError::Format { line: line_no, msg: "variable after data".into() });
                }
                let mut parts = rest.split_whitespace();
                let name = parts.next().ok_or(DataError::Format { line: line_no, msg: "missing name".into() })?;
                schema.push(VariableDecl::new(name, parts.map(str::to_string).collect()));
                continue;
            }
            if line.starts_with('#') {
                continue;
            }
            if data.is_none() {
                data = Some(Dataset::empty(std::mem::take(&mut schema))?);
            }
            let data = data.as_mut().expect("initialized above");
            let (key, count) = line
                .split_once('\t')
                .ok_or(DataError::Format { line: line_no, msg: "missing tab".into() })?;
            let count: u64 = count
                .trim()
                .parse()
                .map_err(|_| DataError::Format { line: line_no, msg: format!("bad count `{count}`") })?;
            let labels: Vec<&str> = if key.is_empty() { Vec::new() } else { key.split(',').collect() };
            if labels.len() != data.schema.len() {
                return Err(DataError::Ragged { line: line_no, expected: data.schema.len(), found: labels.len() });
            }
            let values = labels
                .iter()
                .zip(&data.schema)
                .map(|(l, d)| {
                    d.value_index(l).map(|k| k as u32).ok_or_else(|| DataError::UnknownValue {
                        line: line_no,
                        column: d.name.clone(),
                        value: l.to_string(),
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            data.add(&values, count)?;
        }
        match data {
            Some(d) => Ok(d),
            None => Dataset::empty(schema),
        }
    }

    /// Digest of the count-table text; identifies the data downstream.
    pub fn digest(&self) -> String {
        digest_text(&self.to_count_text())
    }

    /// Contingency counts for the joint instantiations of `subset`.
    pub fn project(&self, subset: &[usize]) -> Result<ContingencyTable, DataError> {
        let mut seen = vec![false; self.schema.len()];
        for &v in subset {
            if v >= self.schema.len() {
                return Err(DataError::IndexOutOfRange(v));
            }
            if std::mem::replace(&mut seen[v], true) {
                return Err(DataError::DuplicateIndex(v));
            }
        }
        let radices: Vec<u64> = subset.iter().map(|&v| self.schema[v].arity() as u64).collect();
        let num_cells_possible = radices
            .iter()
            .try_fold(1u64, |acc, &r| acc.checked_mul(r))
            .ok_or(DataError::CellSpaceOverflow)?;
        let mut cells: BTreeMap<u64, u64> = BTreeMap::new();
        for (values, count) in self.rows() {
            let key = subset
                .iter()
                .zip(&radices)
                .fold(0u64, |acc, (&v, &r)| acc * r + values[v] as u64);
            *cells.entry(key).or_insert(0) += count;
        }
        Ok(ContingencyTable { subset: subset.to_vec(), radices, cells, num_cells_possible })
    }
}

/// Counts of each joint instantiation of a variable subset. Only nonzero
/// cells are stored; keys are mixed-radix with the first subset variable
/// most significant.
#[derive(Clone, Debug)]
pub struct ContingencyTable {
    subset: Vec<usize>,
    radices: Vec<u64>,
    cells: BTreeMap<u64, u64>,
    num_cells_possible: u64,
}

impl ContingencyTable {
    pub fn subset(&self) -> &[usize] {
        &self.subset
    }

    /// q_X, the product of the subset's arities.
    pub fn num_cells_possible(&self) -> u64 {
        self.num_cells_possible
    }

    pub fn num_nonzero(&self) -> usize {
        self.cells.len()
    }

    /// Nonzero cell counts in key order, so sums over them are reproducible.
    pub fn counts(&self) -> impl Iterator<Item = u64> + '_ {
        self.cells.values().copied()
    }

    pub fn total(&self) -> u64 {
        self.cells.values().sum()
    }

    /// Count for one instantiation of the subset (values in subset order).
    pub fn get(&self, values: &[u32]) -> u64 {
        if values.len() != self.radices.len() {
            return 0;
        }
        let key = values.iter().zip(&self.radices).fold(0u64, |acc, (&v, &r)| acc * r + v as u64);
        self.cells.get(&key).copied().unwrap_or(0)
    }

    /// Nonzero cells as (values in subset order, count), sorted by values.
    pub fn cells(&self) -> Vec<(Vec<u32>, u64)> {
        let mut out: Vec<(Vec<u32>, u64)> = self
            .cells
            .iter()
            .map(|(&key, &count)| {
                let mut values = vec![0u32; self.radices.len()];
                let mut k = key;
                for (slot, &r) in values.iter_mut().zip(&self.radices).rev() {
                    *slot = (k % r) as u32;
                    k /= r;
                }
                (values, count)
            })
            .collect();
        out.sort();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_binary() -> Vec<VariableDecl> {
        vec![VariableDecl::with_arity("A", 2), VariableDecl::with_arity("B", 2)]
    }

    #[test]
    fn identical_rows_aggregate() {
        let d = Dataset::ingest_csv("A,B\nx,y\nx,y\nx,y\nx,y\n", None).unwrap();
        assert_eq!(d.distinct(), 1);
        assert_eq!(d.total(), 4);
        assert_eq!(d.count(&[0, 0]), 4);
    }

    #[test]
    fn schema_arity_wins() {
        let schema = vec![VariableDecl::new("A", vec!["lo".into(), "mid".into(), "hi".into()])];
        let d = Dataset::ingest_csv("A\nlo\nhi\nlo\n", Some(&schema)).unwrap();
        assert_eq!(d.schema()[0].arity(), 3);
        assert_eq!(d.count(&[2]), 1);
    }

    #[test]
    fn integer_indices_accepted_with_schema() {
        let d = Dataset::ingest_csv("B,A\n1,0\n", Some(&two_binary())).unwrap();
        assert_eq!(d.count(&[0, 1]), 1);
    }

    #[test]
    fn inferred_numeric_labels_sort_numerically() {
        let d = Dataset::ingest_csv("A\n10\n9\n2\n", None).unwrap();
        assert_eq!(d.schema()[0].values, vec!["2", "9", "10"]);
    }

    #[test]
    fn ragged_and_unknown_values() {
        assert!(matches!(Dataset::ingest_csv("A,B\n0,1\n1\n", None), Err(DataError::Ragged { line: 3, .. })));
        let schema = vec![VariableDecl::with_arity("A", 2)];
        assert!(matches!(
            Dataset::ingest_csv("A\n0\n7\n", Some(&schema)),
            Err(DataError::UnknownValue { line: 3, .. })
        ));
    }

    #[test]
    fn count_text_roundtrip() {
        let mut d = Dataset::empty(vec![
            VariableDecl::new("x", vec!["a".into(), "b".into(), "c".into()]),
            VariableDecl::with_arity("y", 2),
        ])
        .unwrap();
        d.add(&[2, 1], 5).unwrap();
        d.add(&[0, 1], 1).unwrap();
        let text = d.to_count_text();
        assert_eq!(text, "# bnsat-counts v1\n# variable x a b c\n# variable y 0 1\na,1\t1\nc,1\t5\n");
        assert_eq!(Dataset::from_count_text(&text).unwrap(), d);
    }

    #[test]
    fn csv_export_then_ingest() {
        let mut d = Dataset::empty(two_binary()).unwrap();
        d.add(&[1, 0], 3).unwrap();
        d.add(&[0, 0], 2).unwrap();
        let back = Dataset::ingest_csv(&d.to_csv(), Some(d.schema())).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn empty_subset_projection() {
        let mut d = Dataset::empty(two_binary()).unwrap();
        d.add(&[1, 0], 60).unwrap();
        d.add(&[0, 1], 40).unwrap();
        let t = d.project(&[]).unwrap();
        assert_eq!(t.num_cells_possible(), 1);
        assert_eq!(t.cells(), vec![(vec![], 100)]);
    }

    #[test]
    fn full_projection_matches_rows() {
        let mut d = Dataset::empty(two_binary()).unwrap();
        d.add(&[1, 0], 6).unwrap();
        d.add(&[0, 1], 4).unwrap();
        d.add(&[1, 1], 1).unwrap();
        let t = d.project(&[0, 1]).unwrap();
        let rows: Vec<(Vec<u32>, u64)> = d.rows().map(|(k, c)| (k.to_vec(), c)).collect();
        assert_eq!(t.cells(), rows);
        let swapped = d.project(&[1, 0]).unwrap();
        assert_eq!(swapped.get(&[0, 1]), 6);
    }

    #[test]
    fn projection_errors() {
        let d = Dataset::empty(two_binary()).unwrap();
        assert!(matches!(d.project(&[0, 0]), Err(DataError::DuplicateIndex(0))));
        assert!(matches!(d.project(&[2]), Err(DataError::IndexOutOfRange(2))));
    }
}
