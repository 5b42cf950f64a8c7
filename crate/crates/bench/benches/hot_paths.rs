use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use edge_lab_core::bridge_mc::{sample_bridge_with, self_intersection};
use edge_lab_core::feynman_kac::{draw_fk_sample, FkOptions};
use edge_lab_core::sao_operator::{all_eigenvalues, build_sao, smallest_eigenvalues};
use edge_lab_core::{seed, GeneralizedParams, GridSpec, SaoParams};
use std::hint::black_box;

fn eigen_solve(c: &mut Criterion) {
    let theta = SaoParams::scalar(2.0, f64::INFINITY).unwrap();
    let mut group = c.benchmark_group("eigen_solve");
    group.sample_size(10);
    for &h in &[0.05, 0.02] {
        let grid = GridSpec::new(h, 60.0).unwrap();
        let op = build_sao(&theta, &grid, 1).unwrap();
        group.bench_with_input(BenchmarkId::new("all", h), &op, |b, op| b.iter(|| all_eigenvalues(black_box(op)).unwrap()));
        group.bench_with_input(BenchmarkId::new("lowest_10", h), &op, |b, op| {
            b.iter(|| smallest_eigenvalues(black_box(op), 10).unwrap())
        });
    }
    group.finish();
}

fn bridge_sampling(c: &mut Criterion) {
    let mut group = c.benchmark_group("bridge");
    for &steps in &[1024usize, 4096] {
        group.bench_with_input(BenchmarkId::new("sample_and_self_intersection", steps), &steps, |b, &steps| {
            let mut rng = seed::rng(2);
            b.iter(|| {
                let path = sample_bridge_with(&mut rng, 0.0, 0.0, 1.0, steps);
                self_intersection(black_box(&path), 0.01).unwrap()
            })
        });
    }
    group.finish();
}

fn fk_sample(c: &mut Criterion) {
    let mut group = c.benchmark_group("fk_sample");
    let cases = [
        ("scalar_dirichlet", SaoParams::scalar(2.0, f64::INFINITY).unwrap(), GeneralizedParams::new(0.5, 0.5f64.sqrt(), 0.5f64.sqrt()).unwrap()),
        ("two_component", SaoParams::new(2, 2.0, vec![f64::INFINITY; 2]).unwrap(), GeneralizedParams::new(1.0, 0.5f64.sqrt(), 0.5f64.sqrt()).unwrap()),
    ];
    for (name, theta, eta) in cases {
        group.bench_function(name, |b| {
            let mut rng = seed::rng(3);
            b.iter(|| draw_fk_sample(&theta, &eta, 0.3, 0, 0.5, 0.05, FkOptions::default(), &mut rng).unwrap().value())
        });
    }
    group.finish();
}

criterion_group!(benches, eigen_solve, bridge_sampling, fk_sample);
criterion_main!(benches);
