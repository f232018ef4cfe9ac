use std::hint::black_box;

use bnsat::bif::{forward_sample, parse_bif, ASIA_BIF};
use bnsat::encoder::{encode, CycleMode, EncodingMode};
use bnsat::pruning::prune;
use bnsat::scoring::enumerate_scores;
use bnsat::solver::{solve, SolverConfig};
use bnsat::Dataset;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};

fn asia_data(rows: u64) -> Dataset {
    let net = parse_bif(ASIA_BIF).unwrap();
    forward_sample(&net, rows, 1).unwrap()
}

fn scoring(c: &mut Criterion) {
    let mut g = c.benchmark_group("score_asia_cap3");
    for rows in [1_000u64, 10_000, 100_000] {
        let data = asia_data(rows);
        g.bench_with_input(BenchmarkId::from_parameter(rows), &data, |b, d| {
            b.iter(|| enumerate_scores(black_box(d), 3, 1.0).unwrap())
        });
    }
    g.finish();
}

fn encoding(c: &mut Criterion) {
    let table = prune(&enumerate_scores(&asia_data(10_000), 3, 1.0).unwrap()).unwrap().into_table();
    let mut g = c.benchmark_group("encode_asia");
    for (mode, cycle) in [(EncodingMode::Ancestor, CycleMode::Hard), (EncodingMode::Order, CycleMode::None)] {
        g.bench_function(format!("{mode}/{cycle}"), |b| b.iter(|| encode(black_box(&table), mode, cycle).unwrap()));
    }
    g.finish();
}

fn flips(c: &mut Criterion) {
    let table = prune(&enumerate_scores(&asia_data(10_000), 3, 1.0).unwrap()).unwrap().into_table();
    let cutoff = 100_000;
    let mut g = c.benchmark_group("solve_asia_flips");
    g.throughput(Throughput::Elements(cutoff));
    for (mode, cycle) in [(EncodingMode::Ancestor, CycleMode::Hard), (EncodingMode::Order, CycleMode::None)] {
        let (w, _) = encode(&table, mode, cycle).unwrap();
        let cfg = SolverConfig { tries: 1, cutoff, seed: 3, ..SolverConfig::baseline() };
        g.bench_function(format!("{mode}/{cycle}"), |b| b.iter(|| solve(black_box(&w), &cfg).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, scoring, encoding, flips);
criterion_main!(benches);
