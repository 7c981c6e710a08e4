//! Sequential (one worker) against parallel (default pool) timings of the
//! hot kernels. Build with `--no-default-features` to time the code path
//! without rayon at all.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use scaffold_core::fft_solver::{assemble_corrector, homogenize_elastic, SolverOptions};
use scaffold_core::geometry::{micro_stiffness, LevelSet, SurfaceKind, DEFAULT_VOID_CONTRAST};
use scaffold_core::macroscale::{
    default_decay_rate, DomainConfig, LoadCase, MacroDomain, MacroModel, Materials, Mode, ScaffoldDesign,
};
use scaffold_core::par;
use scaffold_core::stimulus::{hom_stimulus, RateTable};
use scaffold_core::tensor::IsotropicMaterial;

fn thread_counts() -> Vec<(&'static str, usize)> {
    let all = std::thread::available_parallelism().map_or(1, |n| n.get());
    vec![("sequential", 1), ("parallel", all)]
}

fn cell_solve(c: &mut Criterion) {
    let n = 16;
    let levels = LevelSet::new(SurfaceKind::Gyroid, n);
    let cell = levels.voxelize(levels.thickness_from_volumes(0.3, 0.2).unwrap());
    let field = micro_stiffness(&cell, IsotropicMaterial::PCL, IsotropicMaterial::BONE, DEFAULT_VOID_CONTRAST);
    let options = SolverOptions::default();
    let mut group = c.benchmark_group("elastic_cell_n16");
    group.sample_size(10);
    for (name, threads) in thread_counts() {
        group.bench_with_input(BenchmarkId::from_parameter(name), &threads, |b, &t| {
            b.iter(|| par::with_threads(t, || homogenize_elastic(black_box(&field), &options).unwrap()))
        });
    }
    group.finish();
}

fn stimulus_quadrature(c: &mut Criterion) {
    let n = 24;
    let levels = LevelSet::new(SurfaceKind::Gyroid, n);
    let cell = levels.voxelize(levels.thickness_from_volumes(0.2, 0.1).unwrap());
    let field = micro_stiffness(&cell, IsotropicMaterial::PCL, IsotropicMaterial::BONE, DEFAULT_VOID_CONTRAST);
    let (_, solution) = homogenize_elastic(&field, &SolverOptions::default()).unwrap();
    let corrector = assemble_corrector(&solution);
    let rates = RateTable::default();
    let strain = [-0.01, 0.003, 0.004, 0.002, 0.0, -0.001];
    let mut group = c.benchmark_group("hom_stimulus_n24");
    for (name, threads) in thread_counts() {
        group.bench_with_input(BenchmarkId::from_parameter(name), &threads, |b, &t| {
            b.iter(|| par::with_threads(t, || hom_stimulus(&corrector, black_box(&strain), rates.activations()[3])))
        });
    }
    group.finish();
}

fn macro_steps(c: &mut Criterion) {
    let cfg = DomainConfig { defect_elements: 6, bone_elements: 4, cross_elements: [8, 8], ..Default::default() };
    let model =
        MacroModel::new(MacroDomain::cylinder(&cfg).unwrap(), Materials::default(), LoadCase::default(), 1.0, 2.0)
            .unwrap();
    let design = ScaffoldDesign::uniform(model.defect_elements(), 0.21, default_decay_rate());
    let mut group = c.benchmark_group("macro_two_days_mode_n");
    group.sample_size(10);
    for (name, threads) in thread_counts() {
        group.bench_with_input(BenchmarkId::from_parameter(name), &threads, |b, &t| {
            b.iter(|| par::with_threads(t, || model.simulate(black_box(&design), Mode::N, &model.law).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, cell_solve, stimulus_quadrature, macro_steps);
criterion_main!(benches);
