use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use std::hint::black_box;
use vshp_core::smallsignal::{analyze, eigen_decompose};
use vshp_core::system::{assemble_system, find_equilibrium, DynamicSystem, TrapezoidalIntegrator};
use vshp_core::{run_scenario, Scenario, Scheme, SystemConfig};

fn derivatives(c: &mut Criterion) {
    for s in [Scheme::Cpc, Scheme::VsmPid] {
        let model = assemble_system(&SystemConfig::two_area(s)).unwrap();
        let x = model.initial_state().to_vec();
        let mut dx = vec![0.0; x.len()];
        c.bench_function(&format!("derivatives/{s}"), |b| {
            b.iter(|| model.derivatives(black_box(&x), &mut dx).unwrap())
        });
    }
}

fn trapezoidal_step(c: &mut Criterion) {
    let model = assemble_system(&SystemConfig::two_area(Scheme::Vsg)).unwrap();
    let eq = find_equilibrium(&model, model.initial_state()).unwrap();
    let mut integ = TrapezoidalIntegrator::new();
    let mut x = eq.x.clone();
    x[model.index("sg1.d_omega").unwrap()] += 1e-3;
    c.bench_function("trapezoidal_step/VSG", |b| {
        b.iter(|| black_box(integ.step(&model, &x, 0.0, 1e-3).unwrap()))
    });
}

fn equilibrium(c: &mut Criterion) {
    let model = assemble_system(&SystemConfig::two_area(Scheme::Vsm)).unwrap();
    c.bench_function("find_equilibrium/VSM", |b| {
        b.iter(|| find_equilibrium(&model, black_box(model.initial_state())).unwrap())
    });
}

fn eigen(c: &mut Criterion) {
    let (lin, _) = analyze(&SystemConfig::two_area(Scheme::VsmPid)).unwrap();
    c.bench_function("eigen_decompose/VSM-PID", |b| {
        b.iter(|| eigen_decompose(black_box(&lin.a)).unwrap())
    });
}

fn scenario(c: &mut Criterion) {
    let mut g = c.benchmark_group("scenario");
    g.sample_size(10);
    let cfg = SystemConfig::two_area(Scheme::Vsg);
    g.bench_function("bus7_step_10s/VSG", |b| {
        b.iter_batched(
            || Scenario::load_step(7, 1.0, 0.5, 10.0),
            |sc| run_scenario(&cfg, &sc).unwrap(),
            BatchSize::SmallInput,
        )
    });
    g.finish();
}

criterion_group!(
    benches,
    derivatives,
    trapezoidal_step,
    equilibrium,
    eigen,
    scenario
);
criterion_main!(benches);
