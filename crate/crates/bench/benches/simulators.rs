use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use kalikow::{forward_simulate, perfect_sample, BackwardBudget, ForwardOptions, NodeId, RandomStream};
use kalikow_bench::{age, constant, ring};

fn perfect(c: &mut Criterion) {
    let mut g = c.benchmark_group("perfect");
    let m = constant();
    g.bench_function("constant/t=100", |b| {
        let mut k = 0;
        b.iter(|| {
            k += 1;
            perfect_sample(&m, NodeId(0), 100.0, &RandomStream::new(k), BackwardBudget::default()).unwrap()
        })
    });
    let m = age(0.25);
    for t in [5.0, 20.0] {
        g.bench_with_input(BenchmarkId::new("age", t), &t, |b, &t| {
            let mut k = 0;
            b.iter(|| {
                k += 1;
                perfect_sample(&m, NodeId(0), t, &RandomStream::new(k), BackwardBudget::default()).unwrap()
            })
        });
    }
    g.finish();
}

fn forward(c: &mut Criterion) {
    let mut g = c.benchmark_group("forward");
    let m = age(0.25);
    let opts = ForwardOptions::new(20.0, 1_000_000);
    g.bench_function("age/t=20", |b| {
        let mut k = 0;
        b.iter(|| {
            k += 1;
            forward_simulate(&m, &[NodeId(0)], &opts, &mut RandomStream::new(k)).unwrap()
        })
    });
    let m = ring(8, 0.1);
    let nodes: Vec<NodeId> = (0..8).map(NodeId).collect();
    let opts = ForwardOptions::new(5.0, 1_000_000);
    g.bench_function("ring8/t=5", |b| {
        let mut k = 0;
        b.iter(|| {
            k += 1;
            forward_simulate(&m, &nodes, &opts, &mut RandomStream::new(k)).unwrap()
        })
    });
    g.finish();
}

criterion_group!(benches, perfect, forward);
criterion_main!(benches);
