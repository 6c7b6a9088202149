//! The generic unbiased projected paradigm: any projector rule with
//! orthonormal columns, any base optimizer whose state update commutes with
//! left multiplication by the projector.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::optim::config::GumConfig;
use crate::optim::state::{galore_projector, Assignment, BlockState, Projector, PROJECTOR_TOL};
use crate::optim::steps::{accumulate, projector_unused};

/// A base optimizer acting on (possibly projected) gradients.
///
/// `update_state` folds `grad` into `momentum` and returns the step `S`
/// that the caller lifts back and subtracts.
pub trait BaseOptimizer: Send + Sync {
    fn name(&self) -> &'static str;
    fn update_state(&self, momentum: &mut Matrix, grad: &Matrix) -> Result<Matrix>;
}

/// Heavy-ball SGD: `S = M ← βM + cG`.
#[derive(Debug, Clone)]
pub struct MomentumSgd {
    pub beta: f64,
    pub damping: bool,
}

impl BaseOptimizer for MomentumSgd {
    fn name(&self) -> &'static str {
        "momentum_sgd"
    }

    fn update_state(&self, momentum: &mut Matrix, grad: &Matrix) -> Result<Matrix> {
        let c = if self.damping { 1.0 - self.beta } else { 1.0 };
        accumulate(momentum, self.beta, c, grad)?;
        Ok(momentum.clone())
    }
}

/// Muon: `S = msign(M)` after `M ← βM + cG`.
#[derive(Debug, Clone)]
pub struct MuonBase {
    cfg: GumConfig,
}

impl MuonBase {
    /// Takes momentum, damping and sign settings from the config.
    pub fn from_config(cfg: &GumConfig) -> Self {
        Self { cfg: cfg.clone() }
    }
}

impl BaseOptimizer for MuonBase {
    fn name(&self) -> &'static str {
        "muon"
    }

    fn update_state(&self, momentum: &mut Matrix, grad: &Matrix) -> Result<Matrix> {
        accumulate(momentum, self.cfg.momentum, self.cfg.damping(), grad)?;
        self.cfg.orthogonalize(momentum)
    }
}

/// Produces an `m × r` projector from the current (oriented) gradient.
pub trait ProjectorRule: Send {
    fn name(&self) -> &'static str;
    fn projector(&mut self, grad: &Matrix, rank: usize) -> Result<Projector>;
}

/// Leading left singular vectors.
#[derive(Debug, Clone, Default)]
pub struct GaloreRule;

impl ProjectorRule for GaloreRule {
    fn name(&self) -> &'static str {
        "galore"
    }

    fn projector(&mut self, grad: &Matrix, rank: usize) -> Result<Projector> {
        galore_projector(grad, rank)
    }
}

/// Gradient-independent Haar-like projector: orthonormalized Gaussian columns.
#[derive(Debug, Clone)]
pub struct RandomOrthonormalRule {
    rng: ChaCha8Rng,
}

impl RandomOrthonormalRule {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl ProjectorRule for RandomOrthonormalRule {
    fn name(&self) -> &'static str {
        "random_orthonormal"
    }

    fn projector(&mut self, grad: &Matrix, rank: usize) -> Result<Projector> {
        let m = grad.rows();
        if rank == 0 || rank > m {
            return Err(Error::input(format!("rank {rank} outside 1..={m}")));
        }
        let mut q = Matrix::random_normal(m, rank, &mut self.rng);
        // Two passes of modified Gram-Schmidt.
        for _ in 0..2 {
            for j in 0..rank {
                let mut col = q.column(j);
                for k in 0..j {
                    let prev = q.column(k);
                    let d: f64 = prev.iter().zip(&col).map(|(a, b)| a * b).sum();
                    col.iter_mut().zip(&prev).for_each(|(c, p)| *c -= d * p);
                }
                let norm = col.iter().map(|x| x * x).sum::<f64>().sqrt();
                col.iter_mut().for_each(|c| *c /= norm);
                q.set_column(j, &col);
            }
        }
        Projector::new(q)
    }
}

/// When the generic paradigm refreshes its projector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ProjectorRefresh {
    /// Once per period from the period's first gradient.
    #[default]
    PerPeriod,
    /// Every inner iteration.
    PerStep,
}

/// One iteration of the unbiased paradigm for a single block.
///
/// Full-rank blocks feed `(1/q)(I − PPᵀ)G` to the base optimizer and apply
/// its step directly; low-rank blocks feed `(1/(1−q))PᵀG` and lift the step
/// with `P`. The compensated variant swaps in `(1/q)(G − (1−q)PPᵀG)` and an
/// unscaled `PᵀG`.
pub fn unbiased_paradigm_step(
    state: &mut BlockState,
    grad: &Matrix,
    base: &dyn BaseOptimizer,
    compensated_variant: bool,
    lr: f64,
) -> Result<()> {
    let g = state.orient(grad)?;
    let q = state.q;
    if state.assignment == Assignment::FullRank && projector_unused(q, compensated_variant) {
        let step = base.update_state(&mut state.momentum, &g.scale(1.0 / q))?;
        state.oriented_weights_mut().axpy(-lr, &step);
        return Ok(());
    }
    let p = state
        .projector
        .clone()
        .ok_or_else(|| Error::state("paradigm step without a projector"))?;
    p.check(PROJECTOR_TOL)?;
    let step = match state.assignment {
        Assignment::FullRank => {
            if q <= 0.0 {
                return Err(Error::state("full-rank assignment with q = 0"));
            }
            let keep = if compensated_variant { 1.0 - q } else { 1.0 };
            let mut residual = g.clone();
            residual.axpy(-keep, &p.matrix().matmul(&p.matrix().t_matmul(&g)));
            let g_tilde = residual.scale(1.0 / q);
            base.update_state(&mut state.momentum, &g_tilde)?
        }
        Assignment::LowRank => {
            let scale = if compensated_variant { 1.0 } else { 1.0 / (1.0 - q) };
            let g_tilde = p.matrix().t_matmul(&g).scale(scale);
            let s = base.update_state(&mut state.momentum, &g_tilde)?;
            p.matrix().matmul(&s)
        }
    };
    state.oriented_weights_mut().axpy(-lr, &step);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optim::config::MsignMode;
    use crate::optim::steps::{gum_step, muon_step};

    fn block(seed: u64, assignment: Assignment, q: f64) -> (BlockState, Matrix) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = Matrix::random_normal(5, 7, &mut rng);
        let g = Matrix::random_normal(5, 7, &mut rng);
        let mut s = BlockState::new(w);
        s.restart(assignment, Some(galore_projector(&g, 2).unwrap()), q).unwrap();
        (s, g)
    }

    #[test]
    fn muon_galore_instance_matches_gum_bit_for_bit() {
        for variant in [false, true] {
            let cfg = GumConfig {
                momentum: 0.9,
                compensated_variant: variant,
                ..Default::default()
            };
            let base = MuonBase::from_config(&cfg);
            for (seed, a) in [(1, Assignment::LowRank), (2, Assignment::FullRank)] {
                let (s0, g) = block(seed, a, 0.5);
                let mut x = s0.clone();
                let mut y = s0;
                for k in 0..3 {
                    let gk = g.scale(1.0 + k as f64);
                    unbiased_paradigm_step(&mut x, &gk, &base, variant, 0.05).unwrap();
                    gum_step(&mut y, &gk, &cfg, 0.05).unwrap();
                }
                assert_eq!(x, y);
            }
        }
    }

    #[test]
    fn sgd_base_with_q_zero_is_projected_sgd() {
        let (mut s, g) = block(3, Assignment::LowRank, 0.0);
        let w0 = s.weights();
        let base = MomentumSgd { beta: 0.0, damping: false };
        unbiased_paradigm_step(&mut s, &g, &base, false, 0.1).unwrap();
        let p = s.projector.clone().unwrap();
        let expected = w0.sub(&p.project_lift(&g).scale(0.1));
        assert!(s.weights().sub(&expected).max_abs() < 1e-14);
    }

    #[test]
    fn random_rule_gives_orthonormal_columns() {
        let mut rule = RandomOrthonormalRule::new(7);
        let p = rule.projector(&Matrix::zeros(9, 4), 3).unwrap();
        assert!(p.matrix().orthonormality_defect() < 1e-12);
        assert!(rule.projector(&Matrix::zeros(2, 4), 3).is_err());
    }

    #[test]
    fn rejects_non_orthonormal_projector() {
        let (mut s, g) = block(4, Assignment::LowRank, 0.5);
        let bad = s.projector.as_ref().unwrap().matrix().scale(1.1);
        s.projector = Some(Projector::new_unchecked(bad));
        let base = MomentumSgd { beta: 0.0, damping: false };
        let err = unbiased_paradigm_step(&mut s, &g, &base, false, 0.1);
        assert!(matches!(err, Err(Error::InvalidProjector(_))));
    }

    #[test]
    fn muon_base_commutes_with_projection() {
        // P·S(PᵀG) = S(PPᵀG) for the Muon state update.
        let cfg = GumConfig {
            momentum: 0.0,
            msign_mode: MsignMode::ExactOracle,
            ..Default::default()
        };
        let base = MuonBase::from_config(&cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = Matrix::random_normal(6, 9, &mut rng);
        let p = galore_projector(&Matrix::random_normal(6, 9, &mut rng), 3).unwrap();
        let mut small = Matrix::zeros(3, 9);
        let lifted = p.lift(&base.update_state(&mut small, &p.project(&g)).unwrap());
        let mut big = Matrix::zeros(6, 9);
        let direct = base.update_state(&mut big, &p.project_lift(&g)).unwrap();
        assert!(lifted.sub(&direct).frobenius_norm() <= 1e-8);

        let mut s = BlockState::new(Matrix::zeros(6, 9));
        muon_step(&mut s, &p.project_lift(&g), &cfg, 1.0).unwrap();
        assert!(s.weights().add(&direct).max_abs() < 1e-12);
    }
}
