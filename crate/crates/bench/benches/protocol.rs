use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use loopfree::engine::{step, RunOptions};
use loopfree::experiment::{execute, sweep_graph, sweep_run, Instance, Stop};
use loopfree::verify::{legitimate, loop_free, model_check_with};
use loopfree::{generate, Configuration, Daemon, Guards};

fn steps(c: &mut Criterion) {
    let start = Configuration::random(sweep_graph(50, 3), 3);
    c.bench_function("central step n=50", |b| {
        b.iter_batched(
            || (start.clone(), Daemon::central()),
            |(c, mut d)| step(black_box(&c), &mut d),
            BatchSize::SmallInput,
        )
    });
    c.bench_function("predicates n=50", |b| {
        b.iter(|| (loop_free(black_box(&start)).holds, legitimate(black_box(&start)).holds))
    });
}

fn runs(c: &mut Criterion) {
    let mut group = c.benchmark_group("runs");
    group.sample_size(20);
    let c0 = Instance::new(20, 1, 0).configuration(Guards::Repaired);
    group.bench_function("adversarial to legitimacy n=20", |b| {
        b.iter(|| {
            execute(black_box(&c0), Daemon::adversarial(1, 20), &[], Stop::Legitimate, RunOptions::new(1_000_000))
                .expect("runs")
        })
    });
    group.bench_function("sweep row with events n=10", |b| {
        b.iter(|| sweep_run(black_box(Instance::new(10, 2, 1)), "adversarial", Guards::Literal, 2))
    });
    group.finish();
}

fn model_checking(c: &mut Criterion) {
    let mut group = c.benchmark_group("modelcheck");
    group.sample_size(10);
    let g = generate::complete(3);
    group.bench_function("triangle cap 6", |b| {
        b.iter(|| model_check_with(black_box(&g), 6, Guards::Literal).expect("in bounds"))
    });
    group.finish();
}

criterion_group!(benches, steps, runs, model_checking);
criterion_main!(benches);
