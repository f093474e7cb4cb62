use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use std::hint::black_box;

use psr_core::fft::{conv2_same_fft, SpectralGrid};
use psr_core::field::Field2D;
use psr_core::forward::{DefectMap, ForwardOperator, ForwardSpec};
use psr_core::grid::GridSpec;
use psr_core::material::MaterialSpec;
use psr_core::pattern::{cluster_to_field, generate_patterns};
use psr_core::psf::{psf_pulse, PsfSpec, PsfStack};
use psr_core::solver::{admm_solve, Grouping, SolverConfig, SpectralProblem};
use psr_core::stack::ThermogramStack;

fn make_psf(n: usize, nt: usize) -> PsfStack {
    let grid = GridSpec::new(n, n, nt, 1e-4, 1e-4, 0.025).unwrap();
    let spec = PsfSpec::from_irradiance(MaterialSpec::stainless_316l(), 2.1e5, 1.0, &grid, 0.2)
        .unwrap();
    psf_pulse(&spec, &grid).unwrap()
}

fn bench_psf(c: &mut Criterion) {
    let grid = GridSpec::new(64, 64, 8, 1e-4, 1e-4, 0.025).unwrap();
    let spec = PsfSpec::from_irradiance(MaterialSpec::stainless_316l(), 2.1e5, 1.0, &grid, 0.2)
        .unwrap();
    c.bench_function("psf_pulse_64x64x8", |b| {
        b.iter(|| psf_tick(&spec, &grid));
    });
}

fn psf_tick(spec: &PsfSpec, grid: &GridSpec) -> f64 {
    let stack = psf_pulse(spec, grid).unwrap();
    black_box(stack.frame(grid.nt - 1)[[32, 32]])
}

fn bench_patterns(c: &mut Criterion) {
    c.bench_function("generate_patterns_4960x20", |b| {
        b.iter(|| {
            let set = generate_patterns(black_box(0.5), 4960, 20, 42).unwrap();
            black_box(set.pattern(19)[0])
        });
    });
}

fn bench_conv(c: &mut Criterion) {
    let psf = make_psf(128, 1);
    let kernel = psf.frame(0).clone();
    let origin = psf.origin_pixel().unwrap();
    let input = ndarray::Array2::from_shape_fn((128, 128), |(i, j)| ((i * j) % 7) as f64);
    c.bench_function("conv2_same_fft_128", |b| {
        b.iter(|| black_box(conv2_same_fft(&kernel, origin, &input)[[64, 64]]));
    });
    let sg = SpectralGrid::for_roi(128, 128);
    let ks = sg.kernel_spectrum(&kernel, origin);
    c.bench_function("conv2_planned_128", |b| {
        b.iter(|| black_box(sg.convolve(&ks, &input)[[64, 64]]));
    });
}

fn bench_admm(c: &mut Criterion) {
    let psf = make_psf(32, 6);
    let grid = *psf.grid();
    let op = ForwardOperator::new(&psf).unwrap();
    let set = generate_patterns(0.5, 64, 4, 3)
        .unwrap()
        .with_layout(8, 8)
        .unwrap()
        .with_cluster_geometry(4, 4.0 * grid.dx)
        .unwrap();
    let patterns: Vec<Field2D> =
        (0..4).map(|m| cluster_to_field(&set, m, &grid).unwrap()).collect();
    let truth = DefectMap::from_rects(grid, &[(12, 12, 6, 6)]).unwrap();
    let t0 = Field2D::zeros(GridSpec { nt: 1, ..grid });
    let stacks: Vec<ThermogramStack> = patterns
        .iter()
        .enumerate()
        .map(|(m, p)| {
            op.simulate(p, &truth, &ForwardSpec::new(0.494, 0.02, t0.clone(), m as u64).unwrap())
                .unwrap()
        })
        .collect();
    let prob = SpectralProblem::build(&stacks, &psf, &patterns).unwrap();
    let cfg = SolverConfig {
        lambda_21: 10.0,
        lambda_2: 1.0,
        rho_admm: 100.0,
        n_iter: 50,
        grouping: Grouping::JointPixel,
        convergence_tol: None,
        nonneg: true,
    };
    c.bench_function("admm_solve_32x32x6x4m_50it", |b| {
        b.iter_batched(
            || (),
            |_| black_box(admm_solve(&prob, &cfg).unwrap().iterations),
            BatchSize::SmallInput,
        );
    });
    c.bench_function("spectral_problem_build_32", |b| {
        b.iter(|| black_box(SpectralProblem::build(&stacks, &psf, &patterns).unwrap().nt));
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = bench_psf, bench_patterns, bench_conv, bench_admm
}
criterion_main!(benches);
