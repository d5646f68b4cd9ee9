use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use swarmsync_bench::{initial_state, reference};
use swarmsync_core::sim::{self, ActiveGraph};
use swarmsync_core::{graph, report, safety, scenario};

fn rk4_step(c: &mut Criterion) {
    let config = reference(1.0);
    let g = ActiveGraph::new(&config, 0).unwrap();
    let state = initial_state(&config);
    c.bench_function("rk4_step", |b| {
        b.iter(|| sim::step(&config, &g, 0.0, config.step, black_box(&state)).unwrap())
    });
}

fn graph_quantities(c: &mut Criterion) {
    let topologies = scenario::fig1_topologies();
    c.bench_function("graph_weights_fig1", |b| {
        b.iter(|| {
            for t in &topologies {
                black_box(graph::graph_weights(black_box(t), 1.0, 1.0).unwrap());
            }
        })
    });
    let config = reference(1.0);
    c.bench_function("dwell_time_report", |b| {
        b.iter(|| report::dwell_time(black_box(&config)).unwrap())
    });
}

fn short_runs(c: &mut Criterion) {
    let config = reference(0.1);
    let mut group = c.benchmark_group("simulate");
    group.sample_size(10);
    group.bench_function("reference_0.1s", |b| {
        b.iter(|| sim::simulate(black_box(&config)).unwrap())
    });
    let trace = sim::simulate(&config).unwrap();
    group.bench_function("safety_monitor_0.1s", |b| {
        b.iter(|| safety::safety_monitor(black_box(&trace), &config.formation, &config.obstacles))
    });
    group.finish();
}

criterion_group!(benches, rk4_step, graph_quantities, short_runs);
criterion_main!(benches);
