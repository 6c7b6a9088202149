//! Property tests over random small matrices.

use gum_core::linalg::{
    msign_exact, newton_schulz, spectral_norm, stable_rank, svd_thin, trace_norm, NewtonSchulzCoeffs,
};
use gum_core::metrics::{chi_residual, grad_norm_trace, running_min_at, TraceRecord};
use gum_core::optim::{effective_gradient, galore_projector, memory_footprint, Assignment};
use gum_core::Matrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn gaussian(rows: usize, cols: usize, seed: u64) -> Matrix {
    Matrix::random_normal(rows, cols, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn orthogonal(n: usize, seed: u64) -> Matrix {
    svd_thin(&gaussian(n, n, seed)).unwrap().u
}

fn dims() -> impl Strategy<Value = (usize, usize)> {
    (1usize..12, 1usize..12)
}

fn rel_diff(a: &Matrix, b: &Matrix) -> f64 {
    a.sub(b).frobenius_norm() / b.frobenius_norm().max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn svd_reconstructs_with_orthonormal_factors((m, n) in dims(), seed in any::<u64>()) {
        let x = gaussian(m, n, seed);
        let svd = svd_thin(&x).unwrap();
        prop_assert_eq!(svd.rank(), m.min(n));
        prop_assert!(rel_diff(&svd.reconstruct(), &x) < 1e-12);
        prop_assert!(svd.u.orthonormality_defect() < 1e-12);
        prop_assert!(svd.v.orthonormality_defect() < 1e-12);
        prop_assert!(svd.s.windows(2).all(|w| w[0] >= w[1]));
        prop_assert!(svd.s.iter().all(|&s| s >= 0.0));
    }

    #[test]
    fn svd_of_wide_block_beyond_jacobi_range(seed in any::<u64>()) {
        let x = gaussian(6, 70, seed);
        let svd = svd_thin(&x).unwrap();
        prop_assert!(rel_diff(&svd.reconstruct(), &x) < 1e-11);
    }

    #[test]
    fn msign_is_idempotent_and_scale_invariant((m, n) in dims(), seed in any::<u64>(), c in 1e-3f64..1e3) {
        let x = gaussian(m, n, seed);
        let s = msign_exact(&x).unwrap();
        prop_assert!(rel_diff(&msign_exact(&s).unwrap(), &s) < 1e-10);
        prop_assert!(rel_diff(&msign_exact(&x.scale(c)).unwrap(), &s) < 1e-10);
        let sv = svd_thin(&s).unwrap().s;
        prop_assert!(sv.iter().all(|v| (v - 1.0).abs() < 1e-9));
    }

    #[test]
    fn norm_chain((m, n) in dims(), seed in any::<u64>()) {
        let x = gaussian(m, n, seed);
        let k = m.min(n) as f64;
        let (spec, frob, nuc) = (spectral_norm(&x).unwrap(), x.frobenius_norm(), trace_norm(&x).unwrap());
        let slack = 1.0 + 1e-12;
        prop_assert!(spec <= frob * slack);
        prop_assert!(frob <= nuc * slack);
        prop_assert!(nuc <= k.sqrt() * frob * slack);
        let sr = stable_rank(&x).unwrap();
        prop_assert!((1.0 - 1e-12..=k + 1e-12).contains(&sr));
    }

    #[test]
    fn newton_schulz_commutes_with_orthogonal_maps((m, n) in dims(), seed in any::<u64>()) {
        let coeffs = NewtonSchulzCoeffs::default();
        let x = gaussian(m, n, seed);
        let (u, v) = (orthogonal(m, seed ^ 1), orthogonal(n, seed ^ 2));
        let lhs = newton_schulz(&u.matmul(&x).matmul_t(&v), &coeffs).unwrap();
        let rhs = u.matmul(&newton_schulz(&x, &coeffs).unwrap()).matmul_t(&v);
        prop_assert!(rel_diff(&lhs, &rhs) < 1e-9);
    }

    #[test]
    fn assignment_mixture_recovers_gradient(
        (m, n) in (2usize..10, 2usize..10),
        seed in any::<u64>(),
        q in 0.05f64..0.95,
        variant in any::<bool>(),
    ) {
        let g = gaussian(m, n, seed);
        let r = 1 + (seed as usize) % (m.min(n) - 1);
        let p = galore_projector(&gaussian(m, n, seed ^ 3), r).unwrap();
        let low = effective_gradient(&p, &g, Assignment::LowRank, q, variant);
        let full = effective_gradient(&p, &g, Assignment::FullRank, q, variant);
        let mut mean = low.scale(1.0 - q);
        mean.axpy(q, &full);
        prop_assert!(rel_diff(&mean, &g) < 1e-12);
    }

    #[test]
    fn chi_residual_lies_in_unit_interval((m, n) in (2usize..10, 2usize..10), seed in any::<u64>()) {
        let g = gaussian(m, n, seed);
        let p = galore_projector(&gaussian(m, n, seed ^ 5), 1).unwrap();
        let chi = chi_residual(&g, &p.project_lift(&g)).unwrap();
        prop_assert!((0.0..=1.0 + 1e-12).contains(&chi));
    }

    #[test]
    fn expected_memory_interpolates(m in 2usize..64, n in 2usize..64, q in 0.0f64..1.0) {
        let r = 1 + m.min(n) / 2;
        let rep = memory_footprint(m, n, r, q).unwrap();
        prop_assert!(rep.galore as f64 <= rep.gum_expected + 1e-9);
        prop_assert!(rep.gum_expected <= rep.gum_worst_case as f64 + 1e-9);
    }

    #[test]
    fn running_minimum_never_increases(values in prop::collection::vec(0.0f64..1e3, 1..50)) {
        let trace: Vec<TraceRecord> = values
            .iter()
            .enumerate()
            .map(|(i, &v)| TraceRecord {
                step: i,
                loss: 0.0,
                grad_trace_norm: v,
                chi_residual: None,
                stable_ranks: Vec::new(),
                stable_rank_mean: None,
                zero_blocks_skipped: false,
                memory_scalars: 0,
                assignment_bits: String::new(),
            })
            .collect();
        let summary = grad_norm_trace(&trace).unwrap();
        prop_assert!(summary.min_so_far.windows(2).all(|w| w[1] <= w[0]));
        for (i, (&best, &v)) in summary.min_so_far.iter().zip(&values).enumerate() {
            prop_assert!(best <= v);
            prop_assert_eq!(running_min_at(&trace, i), Some(best));
        }
    }
}
