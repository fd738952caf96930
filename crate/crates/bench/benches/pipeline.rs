//! Benchmarks for the solver hot paths: the closed-form ridge solve, one
//! application of the ensemble update map, the factored Woodbury
//! correction, and spectral-norm power iteration.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ndarray::Array2;
use std::hint::black_box;

use ncelm_core::diagnostics::{self, RankTwoDelta};
use ncelm_core::elm::{ridge_factor, ridge_solve};
use ncelm_core::linalg::{self, RankOneShift};
use ncelm_core::ncelm::FixedPointMap;
use ncelm_core::rng::SplitMix64;

fn random_matrix(rng: &mut SplitMix64, n: usize, m: usize) -> Array2<f64> {
    let mut out = Array2::zeros((n, m));
    for v in out.iter_mut() {
        *v = rng.next_symmetric();
    }
    out
}

fn one_hot_targets(n: usize, j: usize) -> Array2<f64> {
    let mut y = Array2::zeros((n, j));
    for row in 0..n {
        y[[row, row % j]] = 1.0;
    }
    y
}

fn bench_ridge_solve(c: &mut Criterion) {
    let mut group = c.benchmark_group("ridge_solve");
    let mut rng = SplitMix64::new(1);
    for &(n, d) in &[(200usize, 20usize), (500, 50), (1000, 100)] {
        let h = random_matrix(&mut rng, n, d);
        let y = one_hot_targets(n, 2);
        group.bench_with_input(
            BenchmarkId::from_parameter(format!("{n}x{d}")),
            &(),
            |b, _| b.iter(|| ridge_solve(black_box(&h), black_box(&y), 1.0).unwrap()),
        );
    }
    group.finish();
}

fn bench_map_application(c: &mut Criterion) {
    let mut group = c.benchmark_group("update_map_apply");
    let mut rng = SplitMix64::new(2);
    for &s in &[1usize, 5] {
        let n = 500;
        let d = 50;
        let hidden: Vec<Array2<f64>> = (0..s).map(|_| random_matrix(&mut rng, n, d)).collect();
        let y = one_hot_targets(n, 2);
        let map = FixedPointMap::new(hidden, &y, 1.0, 1e-5).unwrap();
        let point = map.apply(&map.initial_point()).unwrap();
        group.bench_with_input(
            BenchmarkId::from_parameter(format!("{s}_learners")),
            &(),
            |b, _| b.iter(|| map.apply(black_box(&point)).unwrap()),
        );
    }
    group.finish();
}

fn bench_woodbury_correction(c: &mut Criterion) {
    let mut rng = SplitMix64::new(3);
    let n = 500;
    let d = 50;
    let h = random_matrix(&mut rng, n, d);
    let base = ridge_factor(&h, 1.0).unwrap();
    let f_prev = {
        let mut v = ndarray::Array1::zeros(n);
        for x in v.iter_mut() {
            *x = rng.next_symmetric();
        }
        v
    };
    let f_curr = f_prev.mapv(|x| 0.9 * x + 0.01);
    let g = linalg::mat_t_vec(&h, &f_prev);
    let solver = RankOneShift::new(&base, g, 1e-5);
    let delta = RankTwoDelta {
        curr: f_curr,
        prev: f_prev,
    };
    c.bench_function("woodbury_correction_500x50", |b| {
        b.iter(|| {
            diagnostics::woodbury_correction(black_box(&h), &solver, black_box(&delta), 1.0, 1e-5)
                .unwrap()
        })
    });
}

fn bench_spectral_norm(c: &mut Criterion) {
    let mut rng = SplitMix64::new(4);
    let h = random_matrix(&mut rng, 500, 50);
    c.bench_function("spectral_norm_500x50", |b| {
        b.iter(|| diagnostics::spectral_norm(black_box(&h)))
    });
    let base = ridge_factor(&h, 1.0).unwrap();
    c.bench_function("inverse_spectral_norm_50", |b| {
        b.iter(|| diagnostics::inverse_spectral_norm(black_box(&base)))
    });
}

criterion_group!(
    benches,
    bench_ridge_solve,
    bench_map_application,
    bench_woodbury_correction,
    bench_spectral_norm
);
criterion_main!(benches);
