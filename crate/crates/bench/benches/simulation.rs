use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use stufflab::harness::{compute_metrics, RunReport};
use stufflab::simnet;
use stufflab::{form_qc, NodeId, Phase, ViewNumber, Vote};
use stufflab_bench::{cascades, steady_state};

fn simulate(c: &mut Criterion) {
    let mut g = c.benchmark_group("simulate");
    g.sample_size(10);
    for (name, cfg) in steady_state().into_iter().chain(cascades(16)) {
        g.bench_with_input(BenchmarkId::from_parameter(name), &cfg, |b, cfg| {
            b.iter(|| simnet::run(black_box(cfg)).unwrap())
        });
    }
    g.finish();
}

fn audit(c: &mut Criterion) {
    let (_, cfg) = steady_state().pop().unwrap();
    let trace = simnet::run(&cfg).unwrap();
    c.bench_function("audit/report", |b| b.iter(|| RunReport::from_trace(black_box(&trace))));
    c.bench_function("audit/metrics", |b| b.iter(|| compute_metrics(black_box(&trace))));
    c.bench_function("audit/jsonl", |b| b.iter(|| black_box(&trace).to_jsonl()));
}

fn certificates(c: &mut Criterion) {
    for n in [4usize, 31, 64] {
        let block = stufflab::genesis_id();
        let votes: Vec<Vote> = (0..n as u32)
            .map(|i| Vote::new(block, ViewNumber(3), Phase::Prepare, NodeId(i)))
            .collect();
        c.bench_function(&format!("form_qc/n={n}"), |b| b.iter(|| form_qc(black_box(&votes), n)));
    }
}

criterion_group!(benches, simulate, audit, certificates);
criterion_main!(benches);
