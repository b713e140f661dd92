use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use std::hint::black_box;

use sharedrive::abstraction::{classify_plan, summarize_plan, AbstractionConfig};
use sharedrive::arbitration::Arbiter;
use sharedrive::evaluation::ClassificationBench;
use sharedrive::planning::astar_plan;
use sharedrive::scenario;
use sharedrive::sim::episode::{run_episode, EpisodeOptions, Mode, SimConfig};
use sharedrive_bench::{candidate, maze};

fn abstraction(c: &mut Criterion) {
    let cfg = AbstractionConfig::default();
    let traj = candidate(0.05);
    c.bench_function("abstract_plan/10 waypoints", |b| {
        b.iter(|| classify_plan(&summarize_plan(black_box(&traj)), &cfg))
    });
}

fn planning(c: &mut Criterion) {
    let mut group = c.benchmark_group("astar");
    for size in [15, 60] {
        let grid = maze(size);
        group.bench_function(format!("maze {size}x{size}"), |b| {
            b.iter(|| astar_plan(black_box(&grid), (0, 0), (size - 1, size - 1)).unwrap())
        });
    }
    group.finish();
}

fn episodes(c: &mut Criterion) {
    let cfg = SimConfig::default();
    let arbiter = Arbiter::stub_vlm();
    let s = scenario::builtin("cone_construction").unwrap();
    let mut group = c.benchmark_group("episode");
    group.sample_size(20);
    for mode in [Mode::Autonomy, Mode::Supervisory] {
        group.bench_function(mode.name(), |b| {
            b.iter(|| run_episode(&s, &cfg, Some(&arbiter), &EpisodeOptions::new(mode, 3)).unwrap())
        });
    }
    group.finish();
}

fn classification(c: &mut Criterion) {
    let bench = ClassificationBench::prepare(&scenario::corpus(), &SimConfig::default()).unwrap();
    let mut group = c.benchmark_group("classification");
    for (name, arbiter) in [("naive", Arbiter::Naive), ("stub-vlm", Arbiter::stub_vlm())] {
        group.bench_function(format!("{name} x400"), |b| {
            b.iter_batched(
                || arbiter.clone(),
                |a| bench.run(&a, 0.5, 400, 0).unwrap(),
                BatchSize::SmallInput,
            )
        });
    }
    group.finish();
}

criterion_group!(benches, abstraction, planning, episodes, classification);
criterion_main!(benches);
