use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use lerwlab_core::conformal::{map_triple, HalfPlaneMap};
use lerwlab_core::content::minkowski_content;
use lerwlab_core::grid::{approximate_domain, AnalyticShape};
use lerwlab_core::harmonic::HarmonicTable;
use lerwlab_core::lerw::{loop_erase, sample_lerw_indices};
use lerwlab_core::loewner::extract_driving;
use lerwlab_core::metrics::rho_distance;
use lerwlab_core::sle::{sample_driving, trace};
use lerwlab_core::stats::replica_rng;
use lerwlab_core::Site;
use num_complex::Complex64 as C;
use rand::Rng;

fn lattice(c: &mut Criterion) {
    let t = approximate_domain(&AnalyticShape::unit_disk(), 100).unwrap();
    c.bench_function("harmonic_build_n100", |b| b.iter(|| HarmonicTable::build(black_box(&t)).unwrap()));
    let law = HarmonicTable::build(&t).unwrap().hprocess_law().unwrap();
    let mut rng = replica_rng(1, 0);
    c.bench_function("lerw_sample_n100", |b| b.iter(|| sample_lerw_indices(t.len(), &law, &mut rng)));
    let mut rng = replica_rng(2, 0);
    let mut walk = vec![Site::ORIGIN];
    for _ in 0..20_000 {
        let s = *walk.last().unwrap();
        walk.push(s.neighbors()[rng.random_range(0..4usize)]);
    }
    c.bench_function("loop_erase_20k", |b| b.iter(|| loop_erase(black_box(&walk))));
    let small = approximate_domain(&AnalyticShape::unit_disk(), 20).unwrap();
    c.bench_function("zipper_map_n20", |b| b.iter(|| map_triple(black_box(&small)).unwrap()));
}

fn continuum(c: &mut Criterion) {
    let rec = sample_driving(2.0, 1.0, 1e-3, &mut replica_rng(3, 0));
    c.bench_function("sle_trace_1000", |b| b.iter(|| trace(black_box(&rec))));
    let curve = trace(&rec);
    c.bench_function("extract_driving_1000", |b| b.iter(|| extract_driving(black_box(curve.points()), 1e-3, f64::INFINITY).unwrap()));
    let m = HalfPlaneMap::disk(1.0);
    let (pts, times): (Vec<C>, Vec<f64>) = curve
        .points()
        .iter()
        .zip(curve.times())
        .filter_map(|(&w, &t)| m.inverse(w).ok().map(|z| (z, t)))
        .unzip();
    let disk_curve = lerwlab_core::Curve::new(pts, times, lerwlab_core::TimeTag::Capacity).unwrap();
    let eps = [1.0 / 16.0, 1.0 / 32.0];
    c.bench_function("minkowski_content_1000", |b| {
        b.iter(|| minkowski_content(black_box(&disk_curve), 1.25, &eps, &[disk_curve.end_time()]).unwrap())
    });
    let short = disk_curve.resample(200);
    c.bench_function("rho_distance_200", |b| b.iter(|| rho_distance(black_box(&short), black_box(&short))));
}

criterion_group! {
    name = kernels;
    config = Criterion::default().sample_size(10);
    targets = lattice, continuum
}
criterion_main!(kernels);
