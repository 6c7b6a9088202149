//! Built-in verification suites. Each returns a serializable report with an overall `pass`.

use anyhow::Result;
use gum_core::linalg::{msign_exact, newton_schulz, svd_thin, NewtonSchulzCoeffs};
use gum_core::metrics::running_min_at;
use gum_core::optim::{
    effective_gradient, equal_memory_q, galore_projector, memory_footprint, sample_assignments, Assignment,
    GumConfig, Method, ProjectorRule, RandomOrthonormalRule, RunOptions,
};
use gum_core::problems::{NoiseLaw, NoisyLinearRegression, ProblemSpec};
use gum_core::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{ExperimentConfig, Seeds};
use crate::experiment::{parallel_map, resolve, run, trace_csv_bytes, RunResult, TuningResult};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------- unbiasedness

#[derive(Debug, Clone, Serialize)]
pub struct UnbiasedTriple {
    pub shape: (usize, usize),
    pub rank: usize,
    pub q: f64,
    pub projector: &'static str,
    pub full_rank_draws: usize,
    /// `‖mean(Ĝ) − G‖_F`.
    pub error: f64,
    /// `√(Σ_ij var̂(Ĝ_ij))`, the aggregated sample standard deviation.
    pub sigma_hat: f64,
    /// `4 σ̂ / √N`.
    pub bound: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct UnbiasedReport {
    pub compensated_variant: bool,
    pub draws: usize,
    pub triples: Vec<UnbiasedTriple>,
    pub pass: bool,
}

/// Monte-Carlo check of `E[Ĝ] = G` over assignment draws.
///
/// `Ĝ` takes one of two values per draw, so the sample mean and per-entry
/// variance are accumulated from the full-rank count; this is the same
/// statistic as summing the draws one by one.
pub fn verify_unbiased(trials: usize, draws: usize, seed: u64, compensated_variant: bool) -> Result<UnbiasedReport> {
    let mut triples = Vec::with_capacity(trials);
    for t in 0..trials {
        let mut r = rng(seed.wrapping_add(t as u64));
        let m = r.random_range(2..=8);
        let n = r.random_range(m..=12);
        let rank = r.random_range(1..m);
        let q = if t == 0 { 0.5 } else { r.random_range(0.1..0.9) };
        let g = Matrix::random_normal(m, n, &mut r);
        let (p, kind) = if t % 2 == 0 {
            (galore_projector(&Matrix::random_normal(m, n, &mut r), rank)?, "galore")
        } else {
            let mut rule = RandomOrthonormalRule::new(r.random());
            (rule.projector(&g, rank)?, "random_orthonormal")
        };
        let full = effective_gradient(&p, &g, Assignment::FullRank, q, compensated_variant);
        let low = effective_gradient(&p, &g, Assignment::LowRank, q, compensated_variant);
        let k = sample_assignments(draws, q, &mut r)
            .into_iter()
            .filter(|&a| a == Assignment::FullRank)
            .count();
        let frac = k as f64 / draws as f64;
        let mean = full.scale(frac).add(&low.scale(1.0 - frac));
        let spread = full.sub(&low);
        // Unbiased sample variance of a two-valued variable, per entry.
        let var_scale = if draws > 1 {
            frac * (1.0 - frac) * draws as f64 / (draws - 1) as f64
        } else {
            0.0
        };
        let sigma_hat = (var_scale * spread.frobenius_norm_sq()).sqrt();
        let error = mean.sub(&g).frobenius_norm();
        let bound = 4.0 * sigma_hat / (draws as f64).sqrt();
        triples.push(UnbiasedTriple {
            shape: (m, n),
            rank,
            q,
            projector: kind,
            full_rank_draws: k,
            error,
            sigma_hat,
            bound,
            pass: error <= bound,
        });
    }
    Ok(UnbiasedReport {
        compensated_variant,
        draws,
        pass: triples.iter().all(|t| t.pass),
        triples,
    })
}

// --------------------------------------------------------------- commutation

#[derive(Debug, Clone, Serialize)]
pub struct CommutationReport {
    pub pairs: usize,
    /// Largest `‖NS(PX) − P·NS(X)‖_F / ‖NS(X)‖_F`.
    pub max_relative: f64,
    pub tolerance: f64,
    pub pass: bool,
}

pub fn verify_commutation(pairs: usize, seed: u64, coeffs: &NewtonSchulzCoeffs) -> Result<CommutationReport> {
    let tolerance = 1e-9;
    let mut max_relative: f64 = 0.0;
    for i in 0..pairs {
        let mut r = rng(seed.wrapping_add(i as u64));
        let m = r.random_range(2..=16);
        let rank = r.random_range(1..=m);
        let n = r.random_range(1..=16);
        let mut rule = RandomOrthonormalRule::new(r.random());
        let p = rule.projector(&Matrix::zeros(m, 1), rank)?;
        let x = Matrix::random_normal(rank, n, &mut r);
        let ns_x = newton_schulz(&x, coeffs)?;
        let lhs = newton_schulz(&p.lift(&x), coeffs)?;
        let rhs = p.lift(&ns_x);
        max_relative = max_relative.max(lhs.sub(&rhs).frobenius_norm() / ns_x.frobenius_norm());
    }
    Ok(CommutationReport {
        pairs,
        max_relative,
        tolerance,
        pass: max_relative <= tolerance,
    })
}

// -------------------------------------------------------------------- memory

#[derive(Debug, Clone, Serialize)]
pub struct MemoryAlgebraReport {
    pub triples: usize,
    /// Largest `|E[GUM](r′, q*) − GaLore(r)|` in scalars.
    pub max_gap: f64,
    pub pass: bool,
}

pub fn verify_memory_algebra(triples: usize, seed: u64) -> Result<MemoryAlgebraReport> {
    let mut r = rng(seed);
    let mut max_gap: f64 = 0.0;
    for _ in 0..triples {
        let m = r.random_range(2..=4096);
        let rank = r.random_range(2..=m);
        let rank_small = r.random_range(1..rank);
        let q = equal_memory_q(m, rank, rank_small)?;
        let galore = memory_footprint(m, m, rank, 0.0)?.galore as f64;
        let gum = memory_footprint(m, m, rank_small, q)?.gum_expected;
        max_gap = max_gap.max((gum - galore).abs());
    }
    Ok(MemoryAlgebraReport {
        triples,
        max_gap,
        pass: max_gap <= 1.0,
    })
}

// --------------------------------------------------------------------- msign

#[derive(Debug, Clone, Serialize)]
pub struct MsignReport {
    pub cases: usize,
    /// Largest `|σ_i(msign(M)) − 1|` over full-rank inputs.
    pub exact_max_deviation: f64,
    /// Largest `‖NS(M) − msign(M)‖_F / √k` over condition-≤10 inputs.
    pub ns_max_scaled_error: f64,
    pub ns_bound: f64,
    pub pass: bool,
}

/// `U diag(s) Vᵀ` with singular values spread over `[1, cond]`.
pub fn conditioned_matrix(m: usize, n: usize, cond: f64, rng: &mut ChaCha8Rng) -> Result<Matrix> {
    let k = m.min(n);
    let u = svd_thin(&Matrix::random_normal(m, k, rng))?.u;
    let v = svd_thin(&Matrix::random_normal(n, k, rng))?.u;
    let scale = rng.random_range(0.01..100.0);
    let s: Vec<f64> = (0..k)
        .map(|i| {
            let t = if k == 1 { 0.0 } else { i as f64 / (k - 1) as f64 };
            scale * cond.powf(t)
        })
        .collect();
    Ok(u.matmul(&Matrix::from_diag(&s)).matmul_t(&v))
}

pub fn verify_msign(cases: usize, seed: u64, coeffs: &NewtonSchulzCoeffs) -> Result<MsignReport> {
    let ns_bound = 0.05;
    let mut exact_max_deviation: f64 = 0.0;
    let mut ns_max_scaled_error: f64 = 0.0;
    for i in 0..cases {
        let mut r = rng(seed.wrapping_add(i as u64));
        let m = r.random_range(1..=12);
        let n = r.random_range(1..=12);
        let full = Matrix::random_normal(m, n, &mut r);
        for s in svd_thin(&msign_exact(&full)?)?.s {
            exact_max_deviation = exact_max_deviation.max((s - 1.0).abs());
        }
        let cond = r.random_range(1.0..=10.0);
        let x = conditioned_matrix(m, n, cond, &mut r)?;
        let err = newton_schulz(&x, coeffs)?.sub(&msign_exact(&x)?).frobenius_norm();
        ns_max_scaled_error = ns_max_scaled_error.max(err / (m.min(n) as f64).sqrt());
    }
    Ok(MsignReport {
        cases,
        exact_max_deviation,
        ns_max_scaled_error,
        ns_bound,
        pass: exact_max_deviation <= 1e-9 && ns_max_scaled_error <= ns_bound,
    })
}

// ------------------------------------------------------- adversarial spectrum

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumReport {
    /// `‖PPᵀ∇f(0)‖_F / ‖∇f(0)‖_F` for the rank-12 projector of the `ξ = 1` gradient.
    pub relative_capture: f64,
    pub pass: bool,
}

pub fn verify_adversarial_spectrum() -> Result<SpectrumReport> {
    let p = NoisyLinearRegression::counterexample();
    let x0 = Matrix::zeros(p.n(), p.n());
    let noisy = p.grad_with_xi(&x0, 1.0)?;
    let proj = galore_projector(&noisy, p.r_noise())?;
    let truth = p.true_grad(&x0)?;
    let relative_capture = proj.project_lift(&truth).frobenius_norm() / truth.frobenius_norm();
    Ok(SpectrumReport {
        relative_capture,
        pass: relative_capture <= 1e-8,
    })
}

// ------------------------------------------------------------ counterexample

pub const COUNTEREXAMPLE_SEEDS: [u64; 3] = [1, 2, 3];
pub const STEP_SIZE_GRID: [f64; 3] = [1e-3, 1e-2, 1e-1];

/// Configs for full Muon, GaLore-Muon (rank 12) and GUM (rank 2, q = 0.5) on the 20×20 instance.
pub fn counterexample_configs(noise_law: NoiseLaw) -> [ExperimentConfig; 3] {
    let base = |method: Method, rank: usize, q: Option<f64>| ExperimentConfig {
        problem: ProblemSpec::Counterexample { noise_law },
        method,
        optimizer: GumConfig {
            period: 50,
            rank,
            n_blocks: 1,
            full_rank_prob: q,
            momentum: 0.9,
            ..GumConfig::default()
        },
        total_steps: 2000,
        seeds: Seeds::default(),
        trace: RunOptions {
            trace_every: 1,
            chi_every: 20,
            record_initial: true,
            stable_rank: false,
            loss_offset: 0.0,
        },
        step_size_grid: Some(STEP_SIZE_GRID.to_vec()),
        tuning_seed: 0,
        shift_loss: true,
        output_dir: None,
    };
    [
        base(Method::Muon, 2, None),
        base(Method::GaloreMuon, 12, None),
        base(Method::Gum, 2, Some(0.5)),
    ]
}

#[derive(Debug, Clone, Serialize)]
pub struct SeedOutcome {
    pub seed: u64,
    pub muon_final: f64,
    /// Rounding-error bound of the shifted loss at Muon's final iterate.
    pub muon_floor: f64,
    pub galore_initial: f64,
    /// Smallest shifted loss GaLore-Muon reached, as a fraction of its initial value.
    pub galore_min_fraction: f64,
    pub gum_initial: f64,
    pub gum_final: f64,
    pub gum_floor: f64,
    /// `max(gum_final, gum_floor) / max(muon_final, muon_floor)`.
    pub gum_over_muon: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CounterexampleReport {
    pub noise_law: NoiseLaw,
    pub step_sizes: [f64; 3],
    pub tuning: Vec<TuningResult>,
    pub seeds: Vec<SeedOutcome>,
    pub galore_stalls: bool,
    pub gum_matches_muon: bool,
    pub pass: bool,
}

fn min_loss(r: &RunResult) -> f64 {
    r.trace.iter().map(|t| t.loss).fold(f64::INFINITY, f64::min)
}

pub fn verify_counterexample(noise_law: NoiseLaw, seeds: &[u64], threads: usize) -> Result<CounterexampleReport> {
    let configs = counterexample_configs(noise_law);
    let resolved = parallel_map(&configs, threads, resolve)?
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(usize, u64)> = (0..3).flat_map(|m| seeds.iter().map(move |&s| (m, s))).collect();
    let runs = parallel_map(&jobs, threads, |&(m, s)| run(&resolved[m].0.with_seed(s)))?
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let problem = NoisyLinearRegression::counterexample_with(noise_law);
    let floor = |r: &RunResult| problem.shifted_loss_error_bound(&r.trainer.weights()[0]);
    let n = seeds.len();
    let mut outcomes = Vec::with_capacity(n);
    for (i, &seed) in seeds.iter().enumerate() {
        let (muon, galore, gum) = (&runs[i], &runs[n + i], &runs[2 * n + i]);
        let (muon_floor, gum_floor) = (floor(muon)?, floor(gum)?);
        outcomes.push(SeedOutcome {
            seed,
            muon_final: muon.final_loss(),
            muon_floor,
            galore_initial: galore.initial_loss(),
            galore_min_fraction: min_loss(galore) / galore.initial_loss(),
            gum_initial: gum.initial_loss(),
            gum_final: gum.final_loss(),
            gum_floor,
            gum_over_muon: gum.final_loss().max(gum_floor) / muon.final_loss().max(muon_floor),
        });
    }
    let diverged = runs.iter().any(|r| r.diverged);
    let galore_stalls = outcomes.iter().all(|o| o.galore_min_fraction > 0.5);
    let gum_matches_muon = outcomes
        .iter()
        .all(|o| o.gum_over_muon <= 2.0 && o.gum_final < 0.1 * o.gum_initial);
    Ok(CounterexampleReport {
        noise_law,
        step_sizes: [
            resolved[0].0.optimizer.step_size,
            resolved[1].0.optimizer.step_size,
            resolved[2].0.optimizer.step_size,
        ],
        tuning: resolved.into_iter().filter_map(|(_, t)| t).collect(),
        seeds: outcomes,
        galore_stalls,
        gum_matches_muon,
        pass: !diverged && galore_stalls && gum_matches_muon,
    })
}

// ---------------------------------------------------------------- reductions

pub const BLOCKWISE_SHAPES: [(usize, usize); 4] = [(8, 12), (12, 8), (6, 6), (10, 16)];

/// GUM on a four-block quadratic.
pub fn blockwise_config(full_rank_layers: usize, compensated_variant: bool, steps: usize) -> ExperimentConfig {
    ExperimentConfig {
        problem: ProblemSpec::MultiBlockQuadratic {
            shapes: BLOCKWISE_SHAPES.to_vec(),
            noise_sigma: 0.1,
            seed: 7,
        },
        method: Method::Gum,
        optimizer: GumConfig {
            period: 20,
            rank: 2,
            n_blocks: BLOCKWISE_SHAPES.len(),
            full_rank_layers,
            momentum: 0.9,
            step_size: 0.02,
            compensated_variant,
            muon_period_restart: true,
            ..GumConfig::default()
        },
        total_steps: steps,
        seeds: Seeds { master: 5, ..Seeds::default() },
        trace: RunOptions {
            trace_every: 1,
            chi_every: 20,
            record_initial: true,
            stable_rank: true,
            loss_offset: 0.0,
        },
        step_size_grid: None,
        tuning_seed: 0,
        shift_loss: true,
        output_dir: None,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ReductionReport {
    pub steps: usize,
    pub gamma_zero_equals_galore: bool,
    pub gamma_full_equals_muon: bool,
    pub pass: bool,
}

pub fn verify_reductions(steps: usize) -> Result<ReductionReport> {
    let gum0 = blockwise_config(0, false, steps);
    let galore = ExperimentConfig {
        method: Method::GaloreMuon,
        ..gum0.clone()
    };
    let gum_full = blockwise_config(BLOCKWISE_SHAPES.len(), true, steps);
    let muon = ExperimentConfig {
        method: Method::Muon,
        ..gum_full.clone()
    };
    let same = |a: &ExperimentConfig, b: &ExperimentConfig| -> Result<bool> {
        let (ra, rb) = (run(a)?, run(b)?);
        Ok(!ra.diverged && trace_csv_bytes(&ra.trace)? == trace_csv_bytes(&rb.trace)?)
    };
    let gamma_zero_equals_galore = same(&gum0, &galore)?;
    let gamma_full_equals_muon = same(&gum_full, &muon)?;
    Ok(ReductionReport {
        steps,
        gamma_zero_equals_galore,
        gamma_full_equals_muon,
        pass: gamma_zero_equals_galore && gamma_full_equals_muon,
    })
}

// -------------------------------------------------------------- grad decay

/// GUM with one full-rank block in expectation on the four-block quadratic.
pub fn decay_config() -> ExperimentConfig {
    let mut c = blockwise_config(1, false, 4000);
    c.trace.chi_every = 0;
    c.trace.stable_rank = false;
    c.trace.trace_every = 10;
    c
}

#[derive(Debug, Clone, Serialize)]
pub struct DecayOutcome {
    pub seed: u64,
    pub min_at_1000: f64,
    pub min_at_4000: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DecayReport {
    pub seeds: Vec<DecayOutcome>,
    pub pass: bool,
}

pub fn verify_grad_decay(seeds: &[u64], threads: usize) -> Result<DecayReport> {
    let cfg = decay_config();
    let runs = parallel_map(seeds, threads, |&s| run(&cfg.with_seed(s)))?
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let mut out = Vec::new();
    let mut pass = true;
    for (&seed, r) in seeds.iter().zip(&runs) {
        let a = running_min_at(&r.trace, 1000).unwrap_or(f64::NAN);
        let b = running_min_at(&r.trace, 4000).unwrap_or(f64::NAN);
        pass &= !r.diverged && b < a;
        out.push(DecayOutcome {
            seed,
            min_at_1000: a,
            min_at_4000: b,
        });
    }
    Ok(DecayReport { seeds: out, pass })
}

// -------------------------------------------------------------- determinism

#[derive(Debug, Clone, Serialize)]
pub struct DeterminismReport {
    pub configs: usize,
    pub thread_counts: Vec<usize>,
    pub identical: bool,
    pub pass: bool,
}

/// Runs every config at every thread count and compares CSV bytes.
pub fn verify_determinism(configs: &[ExperimentConfig], thread_counts: &[usize]) -> Result<DeterminismReport> {
    let mut reference: Option<Vec<Vec<u8>>> = None;
    let mut identical = true;
    for &threads in thread_counts {
        let bytes = parallel_map(configs, threads, |c| run(c).and_then(|r| trace_csv_bytes(&r.trace)))?
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        match &reference {
            None => reference = Some(bytes),
            Some(r) => identical &= *r == bytes,
        }
    }
    Ok(DeterminismReport {
        configs: configs.len(),
        thread_counts: thread_counts.to_vec(),
        identical,
        pass: identical,
    })
}
