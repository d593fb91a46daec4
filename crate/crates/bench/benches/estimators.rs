use std::hint::black_box;

use bir_core::{
    fit_gaussian_prior, fit_gp, fit_whitener, gen_synthetic, mcmc_sample_posterior, reduce, save, sir, GpFitOptions,
    GpLikelihood, McmcOptions, Method, ReduceOptions, SyntheticFunction, SyntheticSpec,
};
use criterion::{criterion_group, criterion_main, Criterion};

fn sliced(c: &mut Criterion) {
    let spec = SyntheticSpec::new(SyntheticFunction::Quad, 10);
    let (ds, _) = gen_synthetic(&spec, 500, 2).unwrap();
    let z = fit_whitener(&ds.x, None).unwrap().whiten(&ds.x).unwrap();
    c.bench_function("sir n=500 p=10 H=10", |b| b.iter(|| sir(black_box(&z), black_box(&ds.y), 10, 2)));
    c.bench_function("save n=500 p=10 H=5", |b| b.iter(|| save(black_box(&z), black_box(&ds.y), 5, 2)));
}

fn bayesian(c: &mut Criterion) {
    let spec = SyntheticSpec::new(SyntheticFunction::Fun1, 10);
    let (ds, _) = gen_synthetic(&spec, 50, 3).unwrap();
    let z = fit_whitener(&ds.x, None).unwrap().whiten(&ds.x).unwrap();
    let model = fit_gp(&z, &ds.y, &GpFitOptions { n_restarts: 1, ..GpFitOptions::default() }).unwrap();
    let prior = fit_gaussian_prior(&z).unwrap();
    let lik = GpLikelihood::new(&model, true);

    let mut group = c.benchmark_group("posterior");
    group.sample_size(10);
    group.bench_function("mcmc n_mc=2000 p=10", |b| {
        b.iter(|| mcmc_sample_posterior(&lik, &prior, black_box(ds.y[0]), 2000, 1, &McmcOptions::default()))
    });
    group.finish();

    let mut group = c.benchmark_group("reduce");
    group.sample_size(10);
    for method in [Method::Bir, Method::Bave] {
        let mut opts = ReduceOptions::new(method, 2);
        opts.bayes.n_mc = 500;
        opts.gp.n_restarts = 1;
        group.bench_function(format!("{method} n=50 p=10 n_mc=500"), |b| b.iter(|| reduce(black_box(&ds), &opts, 4)));
    }
    group.finish();
}

criterion_group!(benches, sliced, bayesian);
criterion_main!(benches);
