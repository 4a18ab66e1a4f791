use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use phidiv::estimators::{basu_lindsay, classical_mdphide, kernel_mdphide, mle, mpd};
use phidiv::metrics::tvd;
use phidiv::{BandwidthRule, DensityEstimate, DivergenceSpec, Family, FitOptions, KdeSpec, KernelKind, ModelSpec, QuadratureConfig};
use phidiv_bench::fixture_sample;

fn gaussian(c: &mut Criterion) {
    let m = ModelSpec::new(Family::Gaussian);
    let y = fixture_sample(Family::Gaussian, &[0.0, 1.0], 100, 1);
    let opts = FitOptions::default();
    let h = DivergenceSpec::hellinger();
    let silverman = KdeSpec::new(KernelKind::Gaussian, BandwidthRule::Silverman);
    let mut g = c.benchmark_group("gaussian_n100");
    g.bench_function("mle", |b| b.iter(|| mle(&m, black_box(&y), &[0.0, 1.0], &opts)));
    g.bench_function("classical", |b| b.iter(|| classical_mdphide(&m, black_box(&y), &h, &[0.0, 1.0], &opts)));
    g.bench_function("kernel_silverman", |b| b.iter(|| kernel_mdphide(&m, black_box(&y), silverman, &h, &[0.0, 1.0], &opts)));
    g.bench_function("basu_lindsay_silverman", |b| b.iter(|| basu_lindsay(&m, black_box(&y), silverman, &h, &[0.0, 1.0], &opts)));
    g.bench_function("mpd_0.5", |b| b.iter(|| mpd(&m, black_box(&y), 0.5, &[0.0, 1.0], &opts)));
    g.finish();
}

fn gpd(c: &mut Criterion) {
    let m = ModelSpec::new(Family::Gpd);
    let y = fixture_sample(Family::Gpd, &[0.7, 3.0], 100, 2);
    let opts = FitOptions::default();
    let rig = KdeSpec::new(KernelKind::Rig, BandwidthRule::Fixed(0.01));
    let mut g = c.benchmark_group("gpd_n100");
    g.sample_size(10);
    g.bench_function("kernel_rig_0.01", |b| {
        b.iter(|| kernel_mdphide(&m, black_box(&y), rig, &DivergenceSpec::hellinger(), &[0.7, 3.0], &opts))
    });
    g.bench_function("tvd", |b| b.iter(|| tvd(&m, black_box(&[0.5, 2.5]), &[0.7, 3.0], &QuadratureConfig::default())));
    g.finish();
}

fn density(c: &mut Criterion) {
    let y = fixture_sample(Family::Gaussian, &[0.0, 1.0], 1000, 3);
    let mut g = c.benchmark_group("kde_n1000");
    g.bench_function("silverman_build", |b| {
        b.iter(|| DensityEstimate::new(KdeSpec::new(KernelKind::Gaussian, BandwidthRule::Silverman), black_box(&y)))
    });
    g.bench_function("sj_build", |b| {
        b.iter(|| DensityEstimate::new(KdeSpec::new(KernelKind::Gaussian, BandwidthRule::SheatherJones), black_box(&y)))
    });
    let kde = DensityEstimate::new(KdeSpec::new(KernelKind::Gaussian, BandwidthRule::Silverman), &y).unwrap();
    g.bench_function("eval", |b| b.iter(|| kde.ln_eval(black_box(0.3))));
    g.finish();
}

criterion_group!(benches, gaussian, gpd, density);
criterion_main!(benches);
