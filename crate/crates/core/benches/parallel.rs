//! Parallel vs sequential paths: evaluation episodes and independent short runs.
//!
//! The sequential side of each pair is what `--no-default-features` runs.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use silfd::algo::{run_episodes, train, TrainConfig, Variant};
use silfd::chain::DEFAULT_SIZE;
use silfd::demos::{mix, Source};
use silfd::nn::NetParams;
use silfd::par;

fn eval_episodes(c: &mut Criterion) {
    let actor = NetParams::init(&[2, 32, 32, 2], 0).unwrap();
    let mut g = c.benchmark_group("eval_episodes");
    for n in [100, 1000] {
        g.bench_with_input(BenchmarkId::new("parallel", n), &n, |b, &n| {
            b.iter(|| run_episodes(&actor, DEFAULT_SIZE, n, 1, Source::Agent).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("sequential", n), &n, |b, &n| {
            b.iter(|| par::with_threads(1, || run_episodes(&actor, DEFAULT_SIZE, n, 1, Source::Agent).unwrap()))
        });
    }
    g.finish();
}

fn short_runs(c: &mut Criterion) {
    let demos = mix(1, 9, DEFAULT_SIZE).unwrap();
    let run = |seed: usize| {
        let cfg = TrainConfig {
            variant: Variant::Silfd,
            seed: seed as u64,
            total_transitions: 10_000,
            eval_every: 10_000,
            eval_episodes: 10,
            demo_adversarial: Some(9),
            ..TrainConfig::default()
        };
        train(&cfg, Some(&demos), &mut |_| Ok(())).unwrap().final_eval()
    };
    let mut g = c.benchmark_group("short_runs_x4");
    g.sample_size(10);
    g.bench_function("parallel", |b| b.iter(|| par::map_range(4, run)));
    g.bench_function("sequential", |b| b.iter(|| par::map_range_seq(4, run)));
    g.finish();
}

criterion_group!(benches, eval_episodes, short_runs);
criterion_main!(benches);
