//! Single-iteration update rules.
//!
//! All rules take gradients in the caller's orientation and descend:
//! `W ← W − η · direction`. Momentum accumulation is always
//! `R ← β R + c · increment` with `c = 1` or `1 − β` under damping, so the
//! reductions between rules are exact in floating point.

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::optim::config::GumConfig;
use crate::optim::state::{Assignment, BlockState, Projector};

pub(crate) fn accumulate(momentum: &mut Matrix, beta: f64, coeff: f64, increment: &Matrix) -> Result<()> {
    if momentum.shape() != increment.shape() {
        return Err(Error::state(format!(
            "momentum shape {:?} does not match increment {:?}",
            momentum.shape(),
            increment.shape()
        )));
    }
    momentum.scale_in_place(beta);
    momentum.axpy(coeff, increment);
    Ok(())
}

fn descend(weights: &mut Matrix, lr: f64, direction: &Matrix) {
    weights.axpy(-lr, direction);
}

/// Scale on `PᵀG` in the low-rank branch.
pub fn low_rank_scale(q: f64, compensated_variant: bool) -> f64 {
    if compensated_variant {
        1.0
    } else {
        1.0 / (1.0 - q)
    }
}

/// Low-rank increment `s · PᵀG` (`r × n`).
pub fn low_rank_increment(p: &Projector, g: &Matrix, q: f64, compensated_variant: bool) -> Matrix {
    p.project(g).scale(low_rank_scale(q, compensated_variant))
}

/// Compensated full-rank increment `(1/q)(G − PPᵀG)`, or
/// `(1/q)(G − (1 − q)PPᵀG)` under the compensated variant.
pub fn full_rank_increment(p: &Projector, g: &Matrix, q: f64, compensated_variant: bool) -> Matrix {
    let keep = if compensated_variant { 1.0 - q } else { 1.0 };
    let mut inner = g.clone();
    inner.axpy(-keep, &p.project_lift(g));
    inner.scale(1.0 / q)
}

/// Under the compensated variant at `q = 1` the `PPᵀG` term has weight zero,
/// so full-rank blocks need no projector and the step is exactly Muon's.
pub fn projector_unused(q: f64, compensated_variant: bool) -> bool {
    compensated_variant && q == 1.0
}

/// The full-space gradient estimate `Ĝ` a block effectively feeds the base optimizer.
///
/// Low-rank blocks contribute `s · PPᵀG`; full-rank blocks the compensated increment.
pub fn effective_gradient(
    p: &Projector,
    g: &Matrix,
    assignment: Assignment,
    q: f64,
    compensated_variant: bool,
) -> Matrix {
    match assignment {
        Assignment::LowRank => p.lift(&low_rank_increment(p, g, q, compensated_variant)),
        Assignment::FullRank => full_rank_increment(p, g, q, compensated_variant),
    }
}

/// Full-parameter Muon: `M ← βM + cG`, `W ← W − η msign(M)`.
pub fn muon_step(state: &mut BlockState, grad: &Matrix, cfg: &GumConfig, lr: f64) -> Result<()> {
    let g = state.orient(grad)?;
    accumulate(&mut state.momentum, cfg.momentum, cfg.damping(), &g)?;
    let dir = cfg.orthogonalize(&state.momentum)?;
    descend(state.oriented_weights_mut(), lr, &dir);
    Ok(())
}

/// GaLore with Muon as base: `R ← βR + cPᵀG`, `W ← W − η P msign(R)`.
pub fn galore_muon_step(state: &mut BlockState, grad: &Matrix, cfg: &GumConfig, lr: f64) -> Result<()> {
    let g = state.orient(grad)?;
    let p = state
        .projector
        .as_ref()
        .ok_or_else(|| Error::state("GaLore step without a projector"))?;
    let projected = p.project(&g);
    accumulate(&mut state.momentum, cfg.momentum, cfg.damping(), &projected)?;
    let dir = p.lift(&cfg.orthogonalize(&state.momentum)?);
    descend(state.oriented_weights_mut(), lr, &dir);
    Ok(())
}

/// GUM low-rank branch: `R ← βR + c·s·PᵀG`, `W ← W − η P msign(R)`.
pub fn gum_low_rank_step(state: &mut BlockState, grad: &Matrix, cfg: &GumConfig, lr: f64) -> Result<()> {
    if state.assignment != Assignment::LowRank {
        return Err(Error::state("low-rank step on a full-rank block"));
    }
    let g = state.orient(grad)?;
    let p = state
        .projector
        .as_ref()
        .ok_or_else(|| Error::state("low-rank step without a projector"))?;
    let inc = low_rank_increment(p, &g, state.q, cfg.compensated_variant);
    accumulate(&mut state.momentum, cfg.momentum, cfg.damping(), &inc)?;
    let dir = p.lift(&cfg.orthogonalize(&state.momentum)?);
    descend(state.oriented_weights_mut(), lr, &dir);
    Ok(())
}

/// GUM full-rank branch with the compensated increment, `W ← W − η msign(R)`.
pub fn gum_full_rank_step(state: &mut BlockState, grad: &Matrix, cfg: &GumConfig, lr: f64) -> Result<()> {
    if state.assignment != Assignment::FullRank {
        return Err(Error::state("full-rank step on a low-rank block"));
    }
    if state.q <= 0.0 {
        return Err(Error::state("full-rank step with q = 0"));
    }
    let g = state.orient(grad)?;
    let inc = if projector_unused(state.q, cfg.compensated_variant) {
        g.scale(1.0 / state.q)
    } else {
        let p = state
            .projector
            .as_ref()
            .ok_or_else(|| Error::state("full-rank step without a projector"))?;
        full_rank_increment(p, &g, state.q, cfg.compensated_variant)
    };
    accumulate(&mut state.momentum, cfg.momentum, cfg.damping(), &inc)?;
    let dir = cfg.orthogonalize(&state.momentum)?;
    descend(state.oriented_weights_mut(), lr, &dir);
    Ok(())
}

/// Dispatches on the block's assignment.
pub fn gum_step(state: &mut BlockState, grad: &Matrix, cfg: &GumConfig, lr: f64) -> Result<()> {
    match state.assignment {
        Assignment::LowRank => gum_low_rank_step(state, grad, cfg, lr),
        Assignment::FullRank => gum_full_rank_step(state, grad, cfg, lr),
    }
}
