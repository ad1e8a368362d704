use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use iht::dimension::{c2_hat, weights, Reference};
use iht::{fit_iht, iht_spectrum, mixture_sf, null_bases, standardize, Analysis, MixtureSpec};
use iht_bench::{curved_sample, harmonic_weights};
use std::hint::black_box;

fn bench_mixture(c: &mut Criterion) {
    let mut g = c.benchmark_group("mixture_sf");
    for k in [4usize, 16, 64] {
        let spec = MixtureSpec::new(harmonic_weights(k)).unwrap();
        let x = 1.5 * spec.weights.iter().sum::<f64>();
        g.bench_with_input(BenchmarkId::from_parameter(k), &spec, |b, s| {
            b.iter(|| mixture_sf(black_box(x), s).unwrap())
        });
    }
    g.finish();
}

fn bench_fit(c: &mut Criterion) {
    let mut g = c.benchmark_group("fit");
    for (n, p) in [(200usize, 4usize), (1000, 8), (1000, 16)] {
        let d = curved_sample(n, p);
        g.bench_with_input(
            BenchmarkId::new("standardize_fit_spectrum", format!("n{n}_p{p}")),
            &d,
            |b, d| {
                b.iter(|| {
                    let s = standardize(d).unwrap();
                    iht_spectrum(&fit_iht(&s)).unwrap()
                })
            },
        );
    }
    g.finish();
}

fn bench_weights(c: &mut Criterion) {
    let mut g = c.benchmark_group("weights");
    for (n, p) in [(200usize, 4usize), (1000, 8), (1000, 16)] {
        let a = Analysis::new(&curved_sample(n, p)).unwrap();
        let nb = null_bases(&a.spectrum, 2).unwrap();
        let c2 = c2_hat(&a.sample, &a.fit, &nb).unwrap();
        g.bench_function(BenchmarkId::from_parameter(format!("n{n}_p{p}_j2")), |b| {
            b.iter(|| weights(&a.sample, &a.fit, &nb, c2).unwrap())
        });
    }
    g.finish();
}

fn bench_full_test(c: &mut Criterion) {
    let a = Analysis::new(&curved_sample(200, 4)).unwrap();
    c.bench_function("run_test_both_n200_p4_j2", |b| {
        b.iter(|| a.test(2, Reference::Both).unwrap())
    });
}

criterion_group!(
    benches,
    bench_mixture,
    bench_fit,
    bench_weights,
    bench_full_test
);
criterion_main!(benches);
