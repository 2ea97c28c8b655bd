use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use lyapspec_core::fields::presets;
use lyapspec_core::flow::StepControl;
use lyapspec_core::lyapunov::global_exponent_with;
use lyapspec_core::operators::{gaussian_seed, pushforward_with, PushforwardOptions};
use lyapspec_core::par::Exec;

fn policies() -> Vec<(&'static str, Exec)> {
    let mut v = vec![("sequential", Exec::Sequential)];
    if cfg!(feature = "parallel") {
        v.push(("parallel", Exec::Parallel));
    }
    v
}

fn bench_exponent(c: &mut Criterion) {
    let u = presets::cellular();
    let mut g = c.benchmark_group("global_exponent_grid32_t5");
    g.sample_size(10);
    for (name, exec) in policies() {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| global_exponent_with(exec, &u, 5.0, 32, StepControl::default()).unwrap())
        });
    }
    g.finish();
}

fn bench_pushforward(c: &mut Criterion) {
    let u = presets::cellular();
    let w = gaussian_seed([0.2, 0.2], 0.3, 15);
    let mut g = c.benchmark_group("pushforward_grid64_t1");
    g.sample_size(10);
    for (name, exec) in policies() {
        let opts = PushforwardOptions {
            exec,
            ..PushforwardOptions::default()
        };
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| pushforward_with(&w, &u, 1.0, 64, opts).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, bench_exponent, bench_pushforward);
criterion_main!(benches);
