use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use friction_walk_core::constants::{closed_form_constants, RateFunction};
use friction_walk_core::kernel::{sample_jump, scattering_rate};
use friction_walk_core::{PhysParams, RandomStream, Vec3};

fn jumps(c: &mut Criterion) {
    let p = PhysParams::new(1.0, 1.0).unwrap();
    let mut rng = RandomStream::new(1);
    let k = Vec3::new(0.3, -0.2, 0.9);
    c.bench_function("sample_jump", |b| {
        b.iter(|| sample_jump(&p, black_box(k), &mut rng).unwrap())
    });
    c.bench_function("scattering_rate", |b| {
        b.iter(|| scattering_rate(&p, black_box(k)))
    });
}

fn constants(c: &mut Criterion) {
    let p = PhysParams::new(2.0, 3.0).unwrap();
    c.bench_function("closed_form_constants", |b| {
        b.iter(|| closed_form_constants(black_box(&p)).unwrap())
    });
    let rf = RateFunction::new(0.3).unwrap();
    c.bench_function("rate_function", |b| {
        b.iter(|| rf.rate(black_box(-1.2)).unwrap())
    });
}

criterion_group!(benches, jumps, constants);
criterion_main!(benches);
