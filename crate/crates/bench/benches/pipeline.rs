//! Benchmarks for the hot paths of the analysis pipeline: LOWESS smoothing,
//! single-minute NB2 fits, and point-in-zone assignment.

use citypulse::glm::design::DesignMatrix;
use citypulse::glm::fit_negbin;
use citypulse::model::point_in_zone;
use citypulse::smoothing::lowess_grid;
use citypulse::synth::{SynthDataset, SynthScenario};
use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;

fn bench_lowess(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let values: Vec<f64> = (0..1440)
        .map(|t| {
            40.0 + 12.0 * (t as f64 / 180.0).sin() + rng.gen_range(-4.0..4.0)
        })
        .collect();
    c.bench_function("lowess_grid_1440min_bw30", |b| {
        b.iter(|| lowess_grid(black_box(&values), 1.0, 30).unwrap())
    });
}

fn bench_negbin(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let n = 700; // 50 zones x 14 dates, one row per (zone, date)
    let names: Vec<String> = ["intercept", "pogo", "saturday", "sunday"]
        .map(String::from)
        .to_vec();
    let mut rows = Vec::with_capacity(n);
    let mut offset = Vec::with_capacity(n);
    let mut response = Vec::with_capacity(n);
    for i in 0..n {
        let pogo = if i % 2 == 0 { 1.0 } else { 0.0 };
        let sat = if i % 7 == 5 { 1.0 } else { 0.0 };
        let sun = if i % 7 == 6 { 1.0 } else { 0.0 };
        rows.push(vec![1.0, pogo, sat, sun]);
        offset.push(rng.gen_range(-0.5..1.5));
        let mu = f64::exp(4.0 + 0.1 * pogo + offset[i]);
        let noise = rng.gen_range(0.8..1.25);
        response.push((mu * noise) as u64);
    }
    let design = DesignMatrix::from_rows(names, &rows, offset, response).unwrap();
    c.bench_function("fit_negbin_700rows_4cols", |b| {
        b.iter(|| fit_negbin(black_box(&design)).unwrap())
    });
}

fn bench_point_in_zone(c: &mut Criterion) {
    let ds = SynthDataset::new(SynthScenario::default()).unwrap();
    let towers = ds.world.towers.clone();
    let zones = ds.world.zones.clone();
    c.bench_function("point_in_zone_150towers_50zones", |b| {
        b.iter_batched(
            || towers.clone(),
            |towers| {
                for t in &towers {
                    black_box(point_in_zone(t.location, &zones).unwrap());
                }
            },
            BatchSize::SmallInput,
        )
    });
}

criterion_group!(benches, bench_lowess, bench_negbin, bench_point_in_zone);
criterion_main!(benches);
