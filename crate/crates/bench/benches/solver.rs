use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use parareal_bench::{grid, smooth_state};
use parareal_core::propagator::checkpoint::Checkpoint;
use parareal_core::solver::{integrate, rhs};
use parareal_core::ModelParams;

fn tendencies(c: &mut Criterion) {
    let p = ModelParams::default();
    let mut group = c.benchmark_group("rhs");
    for n in [16, 32, 64] {
        let s = smooth_state(grid(n));
        group.bench_with_input(BenchmarkId::from_parameter(n), &s, |b, s| b.iter(|| rhs(black_box(s), &p).unwrap()));
    }
    group.finish();
}

fn one_slice(c: &mut Criterion) {
    let p = ModelParams::default();
    let s = smooth_state(grid(32));
    let mut group = c.benchmark_group("integrate_2400s");
    for spd in [36_u64, 72, 144, 288] {
        group.bench_with_input(BenchmarkId::from_parameter(spd), &spd, |b, &spd| {
            b.iter(|| integrate(black_box(&s), 2400, 86_400 / spd, &p).unwrap())
        });
    }
    group.finish();
}

fn checkpoint(c: &mut Criterion) {
    let s = smooth_state(grid(32));
    let bytes = Checkpoint::from_state(&s, None, 0, 0).encode();
    c.bench_function("checkpoint_encode_32", |b| b.iter(|| Checkpoint::from_state(black_box(&s), None, 0, 0).encode()));
    c.bench_function("checkpoint_decode_32", |b| b.iter(|| Checkpoint::decode(black_box(&bytes)).unwrap()));
}

criterion_group!(benches, tendencies, one_slice, checkpoint);
criterion_main!(benches);
