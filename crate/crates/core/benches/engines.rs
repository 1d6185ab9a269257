//! Parallel versus single-threaded runs of the data-parallel kernels.
//!
//! Both arms run the same code; the sequential arm installs a one-thread
//! rayon pool. Building with `--no-default-features` removes rayon entirely.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use leafavg_core::averaging::{fit_points, MonteCarloAverager, FitSettings};
use leafavg_core::basic_ring::{basic_subspace, BasicRingSettings};
use leafavg_core::models::{
    group_closure, signed_permutation, CartanPolynomial, EstimatorParams, FoliationModel, IsoparametricModel,
};
use leafavg_core::poly::{parse_poly, FPoly, Rational};

fn pools() -> Vec<(&'static str, rayon::ThreadPool)> {
    vec![
        ("sequential", rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap()),
        ("parallel", rayon::ThreadPoolBuilder::new().build().unwrap()),
    ]
}

fn iso_model() -> IsoparametricModel {
    let f = CartanPolynomial::rational(parse_poly("x1^2 + x2^2 - x3^2 - x4^2", 4).unwrap());
    IsoparametricModel::new(f, 2, EstimatorParams { samples: 200_000, ..EstimatorParams::default() }).unwrap()
}

fn leaf_averages(c: &mut Criterion) {
    let model = iso_model();
    let mc = MonteCarloAverager::new(&model, FitSettings::default()).unwrap();
    let points = fit_points(&model, 32, 1, 0);
    let f: FPoly = parse_poly("x1^3*x2 - 2*x3^2*x4^2 + x1*x4", 4).unwrap();
    let mut group = c.benchmark_group("leaf_averages");
    group.sample_size(10);
    for (name, pool) in pools() {
        group.bench_with_input(BenchmarkId::new(name, points.len()), &points, |b, pts| {
            b.iter(|| pool.install(|| black_box(mc.estimate(pts, std::slice::from_ref(&f)).unwrap())))
        });
    }
    group.finish();
}

fn level_samples(c: &mut Criterion) {
    let model = iso_model();
    let mut group = c.benchmark_group("level_samples");
    group.sample_size(10);
    for (name, pool) in pools() {
        group.bench_function(name, |b| b.iter(|| pool.install(|| black_box(model.level_samples(7)))));
    }
    group.finish();
}

fn exact_basic_subspace(c: &mut Criterion) {
    let b3 = FoliationModel::FiniteGroup(
        group_closure(
            vec![
                signed_permutation::<Rational>(&[1, 0, 2], &[1, 1, 1]),
                signed_permutation(&[0, 2, 1], &[1, 1, 1]),
                signed_permutation(&[0, 1, 2], &[-1, 1, 1]),
            ],
            100,
        )
        .unwrap(),
    );
    let settings = BasicRingSettings::default();
    let mut group = c.benchmark_group("basic_subspace_b3_degree8");
    group.sample_size(10);
    for (name, pool) in pools() {
        group.bench_function(name, |b| b.iter(|| pool.install(|| black_box(basic_subspace(&b3, 8, &settings, None).unwrap()))));
    }
    group.finish();
}

criterion_group!(benches, leaf_averages, level_samples, exact_basic_subspace);
criterion_main!(benches);
