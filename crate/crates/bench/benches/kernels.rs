use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use gum_core::linalg::{msign_exact, newton_schulz, svd_thin, NewtonSchulzCoeffs};
use gum_core::optim::{galore_projector, gum_step, Assignment, BlockState, GumConfig};
use gum_core::Matrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn gaussian(rows: usize, cols: usize, seed: u64) -> Matrix {
    Matrix::random_normal(rows, cols, &mut ChaCha8Rng::seed_from_u64(seed))
}

// 48 and 64 use Jacobi, 96 and 128 the bidiagonal path.
fn svd(c: &mut Criterion) {
    let mut group = c.benchmark_group("svd_thin");
    for n in [16, 48, 64, 96, 128] {
        let m = gaussian(n, n, 1);
        group.bench_with_input(BenchmarkId::from_parameter(n), &m, |b, m| b.iter(|| svd_thin(black_box(m)).unwrap()));
    }
    group.finish();
}

fn sign(c: &mut Criterion) {
    let coeffs = NewtonSchulzCoeffs::default();
    let mut group = c.benchmark_group("msign");
    for n in [20, 64, 128] {
        let m = gaussian(n, 2 * n, 2);
        group.bench_with_input(BenchmarkId::new("newton_schulz", n), &m, |b, m| {
            b.iter(|| newton_schulz(black_box(m), &coeffs).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("exact", n), &m, |b, m| b.iter(|| msign_exact(black_box(m)).unwrap()));
    }
    group.finish();
}

fn step(c: &mut Criterion) {
    let cfg = GumConfig { rank: 8, ..GumConfig::default() };
    let (m, n) = (64, 128);
    let grad = gaussian(m, n, 3);
    let projector = galore_projector(&grad, cfg.rank).unwrap();
    let mut group = c.benchmark_group("gum_step");
    for (label, assignment, q) in [("low_rank", Assignment::LowRank, 0.25), ("full_rank", Assignment::FullRank, 0.25)] {
        let mut state = BlockState::new(Matrix::zeros(m, n));
        state.restart(assignment, Some(projector.clone()), q).unwrap();
        group.bench_function(label, |b| b.iter(|| gum_step(&mut state, black_box(&grad), &cfg, 1e-3).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, svd, sign, step);
criterion_main!(benches);
