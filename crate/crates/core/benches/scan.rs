use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use holonomic::par::Exec;
use holonomic::scan::{
    random_table, sequential_holonomy, streaming_infer, tree_scan_with, MemoryMeter, ScanMode, ScanPlan,
};
use holonomic::tensor::{RngState, Vector};

fn scans(c: &mut Criterion) {
    let mut rng = RngState::new(11);
    let table = random_table(32, 6, &mut rng).unwrap();
    let mut group = c.benchmark_group("holonomy");
    group.sample_size(10);
    for len in [1024usize, 8192] {
        let tokens: Vec<usize> = (0..len).map(|_| rng.below(6)).collect();
        let plan = ScanPlan::default();
        group.bench_with_input(BenchmarkId::new("sequential", len), &tokens, |b, t| {
            b.iter(|| sequential_holonomy(&table, t, &plan).unwrap())
        });
        let tree = ScanPlan {
            mode: ScanMode::Tree,
            ..plan
        };
        for (name, exec) in [("tree-serial", Exec::Serial), ("tree-parallel", Exec::Parallel)] {
            group.bench_with_input(BenchmarkId::new(name, len), &tokens, |b, t| {
                b.iter(|| tree_scan_with(&table, t, &tree, 0, exec).unwrap())
            });
        }
        let h0 = Vector::basis(32, 0);
        group.bench_with_input(BenchmarkId::new("streaming-state", len), &tokens, |b, t| {
            b.iter(|| {
                let mut meter = MemoryMeter::default();
                streaming_infer(&table, &h0, t.iter().copied(), &plan, false, &mut meter).unwrap()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, scans);
criterion_main!(benches);
