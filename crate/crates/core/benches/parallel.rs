//! Serial against rayon execution on the data-parallel hot paths.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use hosdf::meshops::{marching_cubes, Bounds};
use hosdf::metrics::{chamfer, random_cloud};
use hosdf::scenegen::{generate_dataset, GenConfig};
use hosdf::sdfnet::{build_decoder, point_features, FEATURE_DIM};
use hosdf::Exec;

const MODES: [(&str, Exec); 2] = [("serial", Exec::Serial), ("parallel", Exec::Parallel)];

fn decoder(c: &mut Criterion) {
    let (dec, store) = build_decoder("sdf_h", 0, 1.0).unwrap();
    let features: Vec<f64> = (0..FEATURE_DIM).map(|i| (i as f64 * 0.37).sin()).collect();
    let x = random_cloud(8192, 1);
    let pts = point_features(&x, &x);
    let mut g = c.benchmark_group("decoder_eval_8192");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| dec.eval_points(&store, &features, &pts, exec).unwrap())
        });
    }
    g.finish();
}

fn extraction(c: &mut Criterion) {
    let sphere = |p: [f64; 3]| (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt() - 0.5;
    let mut g = c.benchmark_group("marching_cubes_96");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| marching_cubes(sphere, 96, &Bounds::default(), exec).unwrap())
        });
    }
    g.finish();
}

fn chamfer_distance(c: &mut Criterion) {
    let a = random_cloud(30_000, 2);
    let b = random_cloud(30_000, 3);
    let mut g = c.benchmark_group("chamfer_30000");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |bch| bch.iter(|| chamfer(&a, &b, exec).unwrap()));
    }
    g.finish();
}

fn generation(c: &mut Criterion) {
    let cfg = GenConfig { points_per_branch: 4000, ..GenConfig::default() };
    let mut g = c.benchmark_group("generate_16_scenes");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| generate_dataset(16, 5, &cfg, exec).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, decoder, extraction, chamfer_distance, generation);
criterion_main!(benches);
