use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use htl_core::hermite::hermite_row;
use htl_core::semigroup::mehler_kernel;
use htl_core::{
    expand, luxemburg_norm, molecular_decompose, tl_norm, DecomposeParams, ExponentField, Grid, SamplingScheme,
    SchemeParams, TestFunction,
};

fn small_scheme() -> SamplingScheme {
    SamplingScheme::new(SchemeParams {
        degree_cap: 64,
        points_per_axis: 128,
        ..SchemeParams::default_for(1)
    })
    .unwrap()
}

fn hermite(c: &mut Criterion) {
    c.bench_function("hermite_row d=512", |b| b.iter(|| hermite_row(black_box(3.7), 512)));
    let s = SamplingScheme::default_1d().unwrap();
    c.bench_function("expand gaussian d=256", |b| {
        b.iter(|| expand(|x| (-x[0] * x[0]).exp(), 1, 256, black_box(&s)).unwrap())
    });
}

fn kernels(c: &mut Criterion) {
    c.bench_function("mehler closed form", |b| {
        b.iter(|| mehler_kernel(black_box(0.5), &[0.3], &[-1.2]).unwrap())
    });
}

fn norms(c: &mut Criterion) {
    let grid = Grid::new(1, 8.0, 512).unwrap();
    let f: Vec<f64> = (0..grid.len()).map(|i| (-grid.point(i)[0].powi(2)).exp()).collect();
    let p = ExponentField::affine_clamped(2.25, 0.25, 1.5, 3.0).unwrap();
    c.bench_function("luxemburg variable p", |b| b.iter(|| luxemburg_norm(black_box(&f), &grid, &p).unwrap()));

    let s = small_scheme();
    let e = TestFunction::Gaussian(1.0).expansion(&s).unwrap();
    let alpha = ExponentField::constant(0.5).unwrap();
    let q = ExponentField::constant(2.0).unwrap();
    c.bench_function("tl_norm d=64", |b| b.iter(|| tl_norm(black_box(&e), &alpha, &p, &q, 6, &s).unwrap()));
}

fn decomposition(c: &mut Criterion) {
    let s = small_scheme();
    let e = TestFunction::H0.expansion(&s).unwrap();
    let alpha = ExponentField::constant(0.0).unwrap();
    let two = ExponentField::constant(2.0).unwrap();
    let params = DecomposeParams {
        v_max: 4,
        ..DecomposeParams::default()
    };
    let mut g = c.benchmark_group("decomposition");
    g.sample_size(10);
    g.bench_function("molecular_decompose v_max=4", |b| {
        b.iter(|| molecular_decompose(black_box(&e), &params, &alpha, &two, &two, &s).unwrap())
    });
    g.finish();
}

criterion_group!(benches, hermite, kernels, norms, decomposition);
criterion_main!(benches);
