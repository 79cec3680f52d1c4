//! Microbenchmarks for the kernels that dominate sweep wall time: the
//! per-edge pair-marginal closed form, the reduced gradient, full quasi-Newton
//! minimization, message passing, exact enumeration, and counting-number
//! construction.

use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;
use varinf_core::rng::seeded;
use varinf_core::{
    exact_marginals, gradient_on_manifold, lbp_run, minimize, trw_counting, FminConfig,
    FreeEnergySpec, Graph, IsingModel, LbpConfig, ModelClass,
};

fn mixed_k10() -> IsingModel {
    IsingModel::sample(Graph::complete(10), ModelClass::Mixed, 1.0, 0.5, &mut seeded(17))
}

fn bench_xi_star(c: &mut Criterion) {
    c.bench_function("xi_star", |b| {
        b.iter(|| {
            varinf_core::xi_star(
                black_box(0.37),
                black_box(0.61),
                black_box(1.3),
                black_box(0.8),
                black_box(0.9),
            )
        })
    });
}

fn bench_gradient(c: &mut Criterion) {
    let model = mixed_k10();
    let spec = FreeEnergySpec::bethe(&model);
    let q: Vec<f64> = (0..10).map(|i| 0.3 + 0.04 * i as f64).collect();
    c.bench_function("gradient_k10", |b| {
        b.iter(|| gradient_on_manifold(black_box(&spec), black_box(&q)))
    });
}

fn bench_minimize(c: &mut Criterion) {
    let model = mixed_k10();
    let spec = FreeEnergySpec::bethe(&model);
    let config = FminConfig { restarts: 1, seed: 5, ..FminConfig::default() };
    let mut group = c.benchmark_group("fmin");
    group.sample_size(20);
    group.bench_function("bethe_k10", |b| {
        b.iter(|| minimize(black_box(&spec), black_box(&config)).unwrap())
    });
    group.finish();
}

fn bench_lbp(c: &mut Criterion) {
    let model = mixed_k10();
    let config = LbpConfig { seed: 5, ..LbpConfig::default() };
    c.bench_function("lbp_k10", |b| {
        b.iter(|| lbp_run(black_box(&model), black_box(1.0), black_box(&config)))
    });
}

fn bench_exact(c: &mut Criterion) {
    let model = IsingModel::sample(Graph::grid(4, 4), ModelClass::Mixed, 1.0, 0.5, &mut seeded(17));
    let mut group = c.benchmark_group("exact");
    group.sample_size(30);
    group.bench_function("grid_4x4", |b| {
        b.iter(|| exact_marginals(black_box(&model)).unwrap())
    });
    group.finish();
}

fn bench_trw(c: &mut Criterion) {
    let graph = Graph::complete(10);
    c.bench_function("trw_counting_k10", |b| {
        b.iter(|| trw_counting(black_box(&graph)).unwrap())
    });
}

criterion_group!(
    benches,
    bench_xi_star,
    bench_gradient,
    bench_minimize,
    bench_lbp,
    bench_exact,
    bench_trw
);
criterion_main!(benches);
