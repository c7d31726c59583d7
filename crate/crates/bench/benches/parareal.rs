use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use parareal_bench::{grid, propagator, smooth_state};
use parareal_core::parareal::RunToEnd;
use parareal_core::{run_parareal, PararealConfig, SliceLayout};

fn full_run(c: &mut Criterion) {
    let g = grid(16);
    let u0 = smooth_state(g);
    let (coarse, fine) = (propagator(36, g), propagator(144, g));
    let layout = SliceLayout::new(0, 2400, 6).unwrap();
    let mut group = c.benchmark_group("parareal_6x2400s");
    group.sample_size(20);
    for workers in [1, 3, 6] {
        let mut cfg = PararealConfig::new(layout);
        cfg.max_parallel_fine = workers;
        cfg.max_iterations = 3;
        group.bench_with_input(BenchmarkId::new("workers", workers), &cfg, |b, cfg| {
            b.iter(|| run_parareal(&u0, cfg, &coarse, &fine, &mut RunToEnd).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, full_run);
criterion_main!(benches);
