use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use qtm_bench::{params, suite};
use qtm_core::bethe_check::certify;
use qtm_core::excitations::{solve_quantisation, ExcitationSpec};
use qtm_core::integral_equations::dressed_suite;
use qtm_core::nlie::{fixed_point_solve, NlieOptions, XConfig};
use qtm_core::C64;

fn dressed(c: &mut Criterion) {
    let mut g = c.benchmark_group("dressed_suite");
    for order in [32, 64, 128] {
        g.bench_with_input(BenchmarkId::from_parameter(order), &order, |b, &n| {
            b.iter(|| dressed_suite(black_box(&params(0.1, None)), n).unwrap())
        });
    }
    g.finish();
}

fn nlie(c: &mut Criterion) {
    let s = suite(64);
    let opts = NlieOptions::default();
    let mut g = c.benchmark_group("fixed_point_solve");
    g.sample_size(10);
    for t in [0.1, 0.05] {
        g.bench_with_input(BenchmarkId::new("empty", t), &t, |b, &t| {
            b.iter(|| fixed_point_solve(&params(t, None), &XConfig::empty(), &s, &opts).unwrap())
        });
    }
    let spec = ExcitationSpec::new(0, &[0], &[0], &[], &[]);
    g.bench_function("particle_hole/0.05", |b| {
        b.iter(|| solve_quantisation(&params(0.05, None), &spec, &s, &opts).unwrap())
    });
    g.finish();
}

fn bethe(c: &mut Criterion) {
    let s = suite(64);
    let sol = fixed_point_solve(&params(0.5, Some(16)), &XConfig::empty(), &s, &NlieOptions::default()).unwrap();
    let mut g = c.benchmark_group("certify");
    g.sample_size(10);
    g.bench_function("n16", |b| b.iter(|| certify(black_box(&sol), C64::new(0.0, 0.0)).unwrap()));
    g.finish();
}

criterion_group!(benches, dressed, nlie, bethe);
criterion_main!(benches);
