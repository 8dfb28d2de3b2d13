//! Compares the rayon-backed kernels against their sequential fallbacks.
//! With the default `parallel` feature the public entry points run on the
//! thread pool; the `*_seq` variants are the single-thread reference.
//! Build with `--no-default-features` to bench the pure-sequential crate.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use kpdiff_core::geometry::{PointCloud, Rng};
use kpdiff_core::losses::chamfer_oneway;
use kpdiff_core::nn;

fn random_points(rng: &mut Rng, n: usize) -> Vec<[f64; 3]> {
    (0..n)
        .map(|_| {
            [
                rng.uniform(-1.0, 1.0),
                rng.uniform(-1.0, 1.0),
                rng.uniform(-1.0, 1.0),
            ]
        })
        .collect()
}

fn bench_nearest(c: &mut Criterion) {
    let mut group = c.benchmark_group("nearest_neighbor");
    group.sample_size(20);
    for &n in &[2048usize, 8192] {
        let mut rng = Rng::seed_from_u64(n as u64);
        let queries = random_points(&mut rng, n);
        let targets = random_points(&mut rng, n);
        group.bench_with_input(BenchmarkId::new("parallel", n), &n, |b, _| {
            b.iter(|| nn::nearest(black_box(&queries), black_box(&targets)))
        });
        group.bench_with_input(BenchmarkId::new("sequential", n), &n, |b, _| {
            b.iter(|| nn::nearest_seq(black_box(&queries), black_box(&targets)))
        });
    }
    group.finish();
}

fn bench_knn(c: &mut Criterion) {
    let mut group = c.benchmark_group("knn_k4");
    group.sample_size(20);
    let n = 2048;
    let mut rng = Rng::seed_from_u64(7);
    let points = random_points(&mut rng, n);
    group.bench_function("parallel", |b| b.iter(|| nn::knn(black_box(&points), 4)));
    group.bench_function("sequential", |b| {
        b.iter(|| nn::knn_seq(black_box(&points), 4))
    });
    group.finish();
}

fn bench_chamfer(c: &mut Criterion) {
    let mut group = c.benchmark_group("chamfer_oneway_2048");
    group.sample_size(20);
    let mut rng = Rng::seed_from_u64(3);
    let a = PointCloud::new(random_points(&mut rng, 2048)).unwrap();
    let b = PointCloud::new(random_points(&mut rng, 2048)).unwrap();
    group.bench_function("parallel_api", |bench| {
        bench.iter(|| chamfer_oneway(black_box(&a), black_box(&b)).unwrap())
    });
    group.bench_function("sequential_kernel", |bench| {
        bench.iter(|| {
            let nearest = nn::nearest_seq(black_box(&a.points), black_box(&b.points));
            nearest.iter().map(|&(_, d2)| d2).sum::<f64>() / a.len() as f64
        })
    });
    group.finish();
}

criterion_group!(benches, bench_nearest, bench_knn, bench_chamfer);
criterion_main!(benches);
