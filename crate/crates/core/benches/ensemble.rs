use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use monitored_fermions::dynamics::StepOptions;
use monitored_fermions::harness::{run_ensemble_with, Execution, RunConfig};

fn config(sites: usize, n_traj: usize) -> RunConfig {
    let mut c = RunConfig::new(sites, 4.0, 1.0);
    c.n_traj = n_traj;
    c.t_equil_factor = 0.05;
    c.t_avg_window = 10.0;
    c
}

fn ensemble(c: &mut Criterion) {
    let mut group = c.benchmark_group("ensemble");
    group.sample_size(10);
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    for sites in [16, 32] {
        let cfg = config(sites, 8);
        group.bench_with_input(BenchmarkId::new("sequential", sites), &cfg, |b, cfg| {
            b.iter(|| {
                run_ensemble_with(cfg, StepOptions::default(), Execution::Sequential, false)
                    .unwrap()
            })
        });
        group.bench_with_input(
            BenchmarkId::new(format!("parallel_{threads}"), sites),
            &cfg,
            |b, cfg| {
                b.iter(|| {
                    run_ensemble_with(
                        cfg,
                        StepOptions::default(),
                        Execution::Parallel { threads: None },
                        false,
                    )
                    .unwrap()
                })
            },
        );
    }
    group.finish();
}

criterion_group!(benches, ensemble);
criterion_main!(benches);
