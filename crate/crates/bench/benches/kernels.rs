use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use ndarray::Array2;

use eigensep_bench::{moon, quick_model, small_config};
use eigensep_core::eigen::{laplacian_eigenpairs, qr};
use eigensep_core::graph::build_graph;
use eigensep_core::metrics::{grassmann_score, GsConfig};
use eigensep_core::specnet::{batch_laplacian, train};
use eigensep_core::{LaplacianKind, LaplacianMatrix, TrainConfig};

fn full_rank(n: usize, k: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, k), |(i, j)| ((i + 1) as f64 * (j + 1) as f64 * 0.37).sin())
}

fn graph_construction(c: &mut Criterion) {
    let mut group = c.benchmark_group("build_graph");
    for n in [512, 2048] {
        let x = moon(n, 0);
        group.bench_with_input(BenchmarkId::from_parameter(n), &x, |b, x| {
            b.iter(|| build_graph(black_box(x.view()), 20).unwrap())
        });
    }
    group.finish();
}

fn laplacian_apply(c: &mut Criterion) {
    let x = moon(2048, 0);
    let lap = LaplacianMatrix::new(build_graph(x.view(), 20).unwrap(), LaplacianKind::Unnormalized).unwrap();
    let y = full_rank(2048, 3);
    c.bench_function("laplacian_apply/2048x3", |b| b.iter(|| lap.apply(black_box(y.view()))));
}

fn batch_kernels(c: &mut Criterion) {
    let x = moon(512, 1);
    c.bench_function("batch_laplacian/512", |b| {
        b.iter(|| batch_laplacian(black_box(x.view()), 20, LaplacianKind::RandomWalk).unwrap())
    });
    let y = full_rank(512, 3);
    c.bench_function("qr/512x3", |b| b.iter(|| qr(black_box(y.view())).unwrap()));
}

fn dense_oracle(c: &mut Criterion) {
    let x = moon(400, 2);
    let lap = LaplacianMatrix::new(build_graph(x.view(), 20).unwrap(), LaplacianKind::Unnormalized).unwrap();
    let mut group = c.benchmark_group("oracle");
    group.sample_size(10);
    group.bench_function("eigenpairs/400", |b| b.iter(|| laplacian_eigenpairs(&lap, 3).unwrap()));
    group.finish();
}

fn training(c: &mut Criterion) {
    let x = moon(2048, 3);
    let cfg = TrainConfig {
        max_epochs: 1,
        ..small_config()
    };
    let mut group = c.benchmark_group("train");
    group.sample_size(10);
    group.bench_function("one_epoch/2048", |b| b.iter(|| train(black_box(x.view()), &cfg).unwrap()));
    group.finish();
}

fn inference(c: &mut Criterion) {
    let x = moon(1024, 4);
    let model = quick_model(&x);
    c.bench_function("embed/1024", |b| b.iter(|| model.embed(black_box(x.view())).unwrap()));

    let y = model.embed(x.view()).unwrap();
    let mut group = c.benchmark_group("grassmann_score");
    group.sample_size(10);
    group.bench_function("1024", |b| {
        b.iter(|| grassmann_score(x.view(), y.view(), &GsConfig::default()).unwrap())
    });
    group.finish();
}

criterion_group!(
    benches,
    graph_construction,
    laplacian_apply,
    batch_kernels,
    dense_oracle,
    training,
    inference
);
criterion_main!(benches);
