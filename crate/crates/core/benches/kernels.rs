use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use monitored_fermions::dynamics::{apply_bond_kraus, StepOptions, Stepper};
use monitored_fermions::observables::{
    entanglement_entropy, half_chain, momentum_correlation, pair_correlation,
};
use monitored_fermions::{GaussianState, ModelParams, QrMethod};

fn evolved(sites: usize) -> (Stepper, GaussianState) {
    let params = ModelParams::new(sites, 4.0, std::f64::consts::PI);
    let stepper = Stepper::new(params.clone()).unwrap();
    let mut state = GaussianState::init_random_occupation(&params, 1).unwrap();
    let mut noise = stepper.noise(1, 0);
    stepper.evolve(&mut state, &mut noise, 200).unwrap();
    (stepper, state)
}

fn qr(c: &mut Criterion) {
    let mut group = c.benchmark_group("normalize");
    for sites in [32, 64, 128] {
        let (_, state) = evolved(sites);
        for (name, method) in [
            ("cholesky", QrMethod::Cholesky),
            ("householder", QrMethod::Householder),
        ] {
            group.bench_with_input(BenchmarkId::new(name, sites), &state, |b, s| {
                b.iter_batched(
                    || {
                        let mut s = s.clone();
                        for bond in 0..sites {
                            apply_bond_kraus(&mut s, bond, 0.3, std::f64::consts::PI);
                        }
                        s
                    },
                    |mut s| s.normalize(method).unwrap(),
                    criterion::BatchSize::SmallInput,
                )
            });
        }
    }
    group.finish();
}

fn step(c: &mut Criterion) {
    let mut group = c.benchmark_group("step");
    for sites in [32, 64, 128] {
        let (stepper, state) = evolved(sites);
        for m in [1, 4] {
            let stepper = Stepper::with_options(
                stepper.params().clone(),
                StepOptions {
                    renormalize_every: m,
                    ..StepOptions::default()
                },
            )
            .unwrap();
            group.bench_with_input(
                BenchmarkId::new(format!("renormalize_every_{m}"), sites),
                &state,
                |b, s| {
                    let mut state = s.clone();
                    let mut noise = stepper.noise(2, 0);
                    b.iter(|| stepper.step(&mut state, &mut noise).unwrap())
                },
            );
        }
    }
    group.finish();
}

fn observables(c: &mut Criterion) {
    let mut group = c.benchmark_group("observables");
    for sites in [64, 128] {
        let (_, state) = evolved(sites);
        let g = state.correlation_matrix();
        let region = half_chain(sites);
        group.bench_function(BenchmarkId::new("correlation_matrix", sites), |b| {
            b.iter(|| state.correlation_matrix())
        });
        group.bench_function(BenchmarkId::new("half_chain_entropy", sites), |b| {
            b.iter(|| entanglement_entropy(&g, &region).unwrap())
        });
        group.bench_function(BenchmarkId::new("momentum_correlation", sites), |b| {
            b.iter(|| momentum_correlation(&pair_correlation(&g)))
        });
    }
    group.finish();
}

criterion_group!(benches, qr, step, observables);
criterion_main!(benches);
