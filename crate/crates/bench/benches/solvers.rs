use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use omd_bench::{grid_field, planar_matrix, random_profile};
use omd_core::{build_cost, classical_mds, solve_exact, solve_sinkhorn, w2_1d_closed_form, SinkhornParams};
use std::hint::black_box;

fn exact(c: &mut Criterion) {
    let mut group = c.benchmark_group("solve_exact");
    group.sample_size(10);
    for n in [10, 20, 30] {
        let (p, q) = (grid_field(n, 1), grid_field(n, 2));
        let cost = build_cost(&p, &q, None).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(n * n), &n, |b, _| {
            b.iter(|| solve_exact(black_box(&p), black_box(&q), &cost).unwrap())
        });
    }
    group.finish();
}

fn sinkhorn(c: &mut Criterion) {
    let mut group = c.benchmark_group("solve_sinkhorn");
    group.sample_size(10);
    let (p, q) = (grid_field(12, 1), grid_field(12, 2));
    let cost = build_cost(&p, &q, None).unwrap();
    for eps in [1e-1, 1e-2] {
        group.bench_with_input(BenchmarkId::from_parameter(eps), &eps, |b, &eps| {
            b.iter(|| solve_sinkhorn(&p, &q, &cost, SinkhornParams::with_epsilon(eps)).unwrap())
        });
    }
    group.finish();
}

fn closed_form(c: &mut Criterion) {
    let (p, q) = (random_profile(50, 1), random_profile(50, 2));
    c.bench_function("w2_1d_closed_form/50", |b| {
        b.iter(|| w2_1d_closed_form(black_box(&p), black_box(&q)).unwrap())
    });
}

fn mds(c: &mut Criterion) {
    let d = planar_matrix(24, 3);
    c.bench_function("classical_mds/24", |b| b.iter(|| classical_mds(black_box(&d)).unwrap()));
}

criterion_group!(benches, exact, sinkhorn, closed_form, mds);
criterion_main!(benches);
