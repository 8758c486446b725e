use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use shadowbasis_bench::{busy_elm, cube_view};
use shadowbasis_core::bases::build_bases;
use shadowbasis_core::elm::pixel_direction;
use shadowbasis_core::shadow::{hard_shadow_in, ShadowMethod};

fn compose(c: &mut Criterion) {
    let bases = build_bases(&cube_view(256));
    let elm = busy_elm();
    let weights = bases.weights((&elm).into()).unwrap();
    c.bench_function("compose_256_from_weights", |b| b.iter(|| bases.compose_weights(black_box(&weights))));
    c.bench_function("compose_256_from_mixture", |b| b.iter(|| bases.compose(black_box(&elm).into()).unwrap()));
}

fn rasterize(c: &mut Criterion) {
    let elm = busy_elm();
    c.bench_function("rasterize_elm_512x256", |b| b.iter(|| black_box(&elm).rasterize().unwrap()));
}

fn hard_shadows(c: &mut Criterion) {
    let view = cube_view(256);
    let dir = pixel_direction(100, 40).unwrap();
    c.bench_function("hard_shadow_projection_256", |b| {
        b.iter(|| hard_shadow_in(&view, black_box(&dir), ShadowMethod::Projection).unwrap())
    });
    c.bench_function("hard_shadow_raycast_256", |b| {
        b.iter(|| hard_shadow_in(&view, black_box(&dir), ShadowMethod::RayCast).unwrap())
    });
}

fn bases(c: &mut Criterion) {
    let view = cube_view(64);
    let mut group = c.benchmark_group("build_bases");
    group.sample_size(10);
    group.bench_function("cube_64", |b| b.iter(|| build_bases(black_box(&view))));
    group.finish();
}

criterion_group!(benches, compose, rasterize, hard_shadows, bases);
criterion_main!(benches);
