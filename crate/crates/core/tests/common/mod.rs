//! Brute-force oracles shared by the integration tests. Nothing here calls
//! the scoring module.

#![allow(dead_code)]

use bnsat::bif::VariableDecl;
use bnsat::{BayesNet, Dataset, ParentSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Lanczos approximation (g = 7, 9 terms), independent of the library's lgamma.
pub fn lanczos_ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - lanczos_ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = C[0];
    let t = x + G + 0.5;
    for (i, &c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Log BDeu family score straight from the row counts, cell by cell.
pub fn oracle_family_score(data: &Dataset, child: usize, parents: &[usize], alpha: f64) -> f64 {
    let schema = data.schema();
    let r = schema[child].arity();
    let q: usize = parents.iter().map(|&p| schema[p].arity()).product();
    let mut nijk = vec![0u64; q * r];
    for (row, count) in data.rows() {
        let j = parents.iter().fold(0usize, |acc, &p| acc * schema[p].arity() + row[p] as usize);
        nijk[j * r + row[child] as usize] += count;
    }
    let a_j = alpha / q as f64;
    let a_jk = alpha / (q * r) as f64;
    let mut s = 0.0;
    for j in 0..q {
        let cells = &nijk[j * r..(j + 1) * r];
        let nij: u64 = cells.iter().sum();
        s += lanczos_ln_gamma(a_j) - lanczos_ln_gamma(a_j + nij as f64);
        for &n in cells {
            s += lanczos_ln_gamma(a_jk + n as f64) - lanczos_ln_gamma(a_jk);
        }
    }
    s
}

pub fn oracle_structure_score(data: &Dataset, parents: &[Vec<usize>], alpha: f64) -> f64 {
    parents.iter().enumerate().map(|(c, p)| oracle_family_score(data, c, p, alpha)).sum()
}

fn acyclic(parents: &[Vec<usize>]) -> bool {
    let n = parents.len();
    let mut state = vec![0u8; n];
    fn visit(v: usize, parents: &[Vec<usize>], state: &mut [u8]) -> bool {
        match state[v] {
            1 => return false,
            2 => return true,
            _ => {}
        }
        state[v] = 1;
        for &p in &parents[v] {
            if !visit(p, parents, state) {
                return false;
            }
        }
        state[v] = 2;
        true
    }
    (0..n).all(|v| visit(v, parents, &mut state))
}

pub fn is_acyclic(parents: &[Vec<usize>]) -> bool {
    acyclic(parents)
}

/// Every DAG on `n` labelled nodes as parent lists (sorted), by filtering all
/// parent-set vectors.
pub fn all_dags(n: usize) -> Vec<Vec<Vec<usize>>> {
    let per_child: Vec<Vec<Vec<usize>>> = (0..n)
        .map(|c| {
            let others: Vec<usize> = (0..n).filter(|&v| v != c).collect();
            (0..1u32 << others.len())
                .map(|mask| others.iter().enumerate().filter(|(b, _)| mask >> b & 1 == 1).map(|(_, &v)| v).collect())
                .collect()
        })
        .collect();
    let mut out = Vec::new();
    let mut idx = vec![0usize; n];
    loop {
        let g: Vec<Vec<usize>> = (0..n).map(|c| per_child[c][idx[c]].clone()).collect();
        if acyclic(&g) {
            out.push(g);
        }
        let mut k = 0;
        loop {
            if k == n {
                return out;
            }
            idx[k] += 1;
            if idx[k] < per_child[k].len() {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

/// Best exact score over all DAGs with at most `cap` parents per node.
pub fn exhaustive_best(data: &Dataset, cap: usize, alpha: f64) -> (f64, Vec<Vec<usize>>) {
    all_dags(data.num_variables())
        .into_iter()
        .filter(|g| g.iter().all(|p| p.len() <= cap))
        .map(|g| (oracle_structure_score(data, &g, alpha), g))
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .expect("at least the empty graph")
}

/// P(Pa_child = set) under the posterior restricted to DAGs with at most
/// `cap` parents per node, uniform structure prior.
pub fn exact_parent_posteriors(data: &Dataset, cap: usize, alpha: f64) -> Vec<Vec<(ParentSet, f64)>> {
    let n = data.num_variables();
    let dags: Vec<(f64, Vec<Vec<usize>>)> = all_dags(n)
        .into_iter()
        .filter(|g| g.iter().all(|p| p.len() <= cap))
        .map(|g| (oracle_structure_score(data, &g, alpha), g))
        .collect();
    let m = dags.iter().map(|d| d.0).fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = dags.iter().map(|d| (d.0 - m).exp()).sum();
    let mut out: Vec<Vec<(ParentSet, f64)>> = vec![Vec::new(); n];
    for (s, g) in &dags {
        let w = (s - m).exp() / z;
        for (c, p) in g.iter().enumerate() {
            let key = ParentSet::new(p.clone());
            match out[c].iter_mut().find(|(k, _)| *k == key) {
                Some(slot) => slot.1 += w,
                None => out[c].push((key, w)),
            }
        }
    }
    out
}

/// Random network over `n` variables with arities in `arities`, at most
/// `max_parents` parents each, and CPT rows drawn from a flat Dirichlet.
pub fn random_network(rng: &mut ChaCha8Rng, n: usize, arities: std::ops::RangeInclusive<usize>, max_parents: usize) -> BayesNet {
    let vars: Vec<VariableDecl> =
        (0..n).map(|i| VariableDecl::with_arity(format!("x{i}"), rng.random_range(arities.clone()))).collect();
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    let mut parents = vec![Vec::new(); n];
    for (pos, &v) in order.iter().enumerate() {
        for &u in &order[..pos] {
            if parents[v].len() < max_parents && rng.random_bool(0.5) {
                parents[v].push(u);
            }
        }
        parents[v].sort_unstable();
    }
    let cpts = (0..n)
        .map(|v| {
            let rows: usize = parents[v].iter().map(|&p| vars[p].arity()).product();
            (0..rows)
                .map(|_| {
                    let raw: Vec<f64> = (0..vars[v].arity()).map(|_| -rng.random::<f64>().max(1e-12).ln()).collect();
                    let s: f64 = raw.iter().sum();
                    raw.into_iter().map(|x| x / s).collect()
                })
                .collect()
        })
        .collect();
    BayesNet::new("random", vars, parents, Some(cpts)).expect("valid random network")
}

/// Dataset of `rows` uniform random rows.
pub fn random_dataset(rng: &mut ChaCha8Rng, arities: &[usize], rows: u64) -> Dataset {
    let schema = arities.iter().enumerate().map(|(i, &a)| VariableDecl::with_arity(format!("x{i}"), a)).collect();
    let mut d = Dataset::empty(schema).unwrap();
    for _ in 0..rows {
        let row: Vec<u32> = arities.iter().map(|&a| rng.random_range(0..a as u32)).collect();
        d.add(&row, 1).unwrap();
    }
    d
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
