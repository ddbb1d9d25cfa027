use std::hint::black_box;

use boxcox_bench::fixture;
use boxcox_core::inference::{shape_matrix, GenChiSq, PluginMatrices};
use boxcox_core::model::{composite_likelihood, composite_score, CoefVector};
use boxcox_core::probit::{log_normal_cdf, mills_ratio, sigma_weight};
use criterion::{criterion_group, criterion_main, Criterion};

fn grid() -> Vec<f64> {
    (0..10_000).map(|i| -40.0 + 80.0 * i as f64 / 9_999.0).collect()
}

fn probit(c: &mut Criterion) {
    let ts = grid();
    c.bench_function("log_normal_cdf/10k", |b| {
        b.iter(|| ts.iter().map(|&t| log_normal_cdf(black_box(t))).sum::<f64>())
    });
    c.bench_function("mills_ratio/10k", |b| b.iter(|| ts.iter().map(|&t| mills_ratio(black_box(t))).sum::<f64>()));
    c.bench_function("sigma_weight/10k", |b| b.iter(|| ts.iter().map(|&t| sigma_weight(black_box(t))).sum::<f64>()));
}

fn likelihood(c: &mut Criterion) {
    let f = fixture(200, 250);
    let mut coef = CoefVector::zeros(250, f.design.k());
    coef.beta[0] = 1.0;
    coef.beta[1] = -1.0;
    coef.intercepts = f.design.thresholds().iter().map(|t| t.tanh()).collect();
    let columns: Vec<usize> = (0..250).collect();
    c.bench_function("composite_likelihood/n200_p250_k19", |b| {
        b.iter(|| composite_likelihood(&f.design, &f.data.x, black_box(&coef)).unwrap())
    });
    c.bench_function("composite_score/n200_p250_k19", |b| {
        b.iter(|| composite_score(&f.design, &f.data.x, black_box(&coef), &columns).unwrap())
    });
    let active = [2usize, 5, 9];
    c.bench_function("plugin_matrices/n200_k19", |b| {
        b.iter(|| PluginMatrices::at(&f.design, &f.data.x, black_box(&coef), &active, &f.hypothesis).unwrap())
    });
}

fn calibration(c: &mut Criterion) {
    let f = fixture(200, 250);
    let mut coef = CoefVector::zeros(250, f.design.k());
    coef.intercepts = f.design.thresholds().to_vec();
    let plugins = PluginMatrices::at(&f.design, &f.data.x, &coef, &[], &f.hypothesis).unwrap();
    let a = shape_matrix(&plugins.psi_hat, &plugins.tau_hat).unwrap();
    let mut group = c.benchmark_group("gen_chisq");
    group.sample_size(20);
    group.bench_function("sample/100k_r1", |b| b.iter(|| GenChiSq::sample(&a, 100_000, black_box(7)).unwrap()));
    group.finish();
}

criterion_group!(benches, probit, likelihood, calibration);
criterion_main!(benches);
