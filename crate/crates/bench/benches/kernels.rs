use criterion::{black_box, criterion_group, criterion_main, BatchSize, Criterion};
use rdms_bench::Fixture;
use rdms_core::experiment::Preset;
use rdms_core::gmsfem::{assemble_local_diffusion, solve_local_spectral, MsStepper};
use rdms_core::timestepping::{FiStepper, FineProblem, SiStepper, Stepper};

fn assembly(c: &mut Criterion) {
    let f = Fixture::new(Preset::Test1a, 160, 6);
    let s = &f.setup;
    c.bench_function("assemble_fine_problem_160", |b| {
        b.iter(|| FineProblem::assemble(black_box(&s.grid), &s.subdomains, &s.coefficients).unwrap())
    });
}

fn fine_steps(c: &mut Criterion) {
    let f = Fixture::new(Preset::Test1b, 160, 6);
    let mut si = SiStepper::new(f.setup.problem.clone(), &f.stepping).unwrap();
    c.bench_function("si_step_160", |b| b.iter(|| si.advance(black_box(&f.setup.initial)).unwrap()));

    let g = Fixture::new(Preset::Test1b, 80, 6);
    let mut fi = FiStepper::new(g.setup.problem.clone(), &g.stepping).unwrap();
    c.bench_function("fi_step_80", |b| b.iter(|| fi.advance(black_box(&g.setup.initial)).unwrap()));
}

fn local_spectral(c: &mut Criterion) {
    let f = Fixture::new(Preset::Test1a, 160, 8);
    let local = assemble_local_diffusion(f.diffusion(0), &f.patch).unwrap();
    c.bench_function("local_eigensolve_8", |b| b.iter(|| solve_local_spectral(0, black_box(&local), 8).unwrap()));
}

fn multiscale_step(c: &mut Criterion) {
    let f = Fixture::new(Preset::Test1b, 160, 6);
    let s = &f.setup;
    c.bench_function("ms_step_160_m6", |b| {
        b.iter_batched(
            || MsStepper::new(&f.model, &s.problem, &f.stepping, s.config.solver.coarse, &s.initial).unwrap(),
            |mut ms| ms.advance(&s.initial).unwrap(),
            BatchSize::SmallInput,
        )
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(20);
    targets = assembly, fine_steps, local_spectral, multiscale_step
}
criterion_main!(benches);
