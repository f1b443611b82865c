use criterion::{criterion_group, criterion_main, Criterion};
use holonomic::autodiff::Precision;
use holonomic::experiments::{noise_sweep, uniform_grid, SweepSpec};
use holonomic::models::{Model, ModelKind, ModelSpec};
use holonomic::par::Exec;
use holonomic::tasks::Task;
use holonomic::tensor::RngState;

fn sweeps(c: &mut Criterion) {
    let mut group = c.benchmark_group("noise-sweep");
    group.sample_size(10);
    for kind in [ModelKind::Holonomic, ModelKind::Rnn] {
        let model = Model::new(&ModelSpec::new(kind, 32), Task::S3, &mut RngState::new(5)).unwrap();
        let spec = SweepSpec {
            grid: uniform_grid(0.0, 1.0, 5),
            episodes: 256,
            len: 5,
            resamples: 100,
            site: None,
        };
        for (name, exec) in [("serial", Exec::Serial), ("parallel", Exec::Parallel)] {
            group.bench_function(format!("{}-{name}", kind.name()), |b| {
                b.iter(|| noise_sweep(&model, &spec, &RngState::new(1), Precision::F64, exec).unwrap())
            });
        }
    }
    group.finish();
}

criterion_group!(benches, sweeps);
criterion_main!(benches);
