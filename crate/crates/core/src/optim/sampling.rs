//! Per-period assignment of blocks to full-rank or low-rank updates.

use rand::seq::index;
use rand::Rng;

use crate::optim::config::{GumConfig, SamplingMode};
use crate::optim::state::Assignment;

/// Independent Bernoulli(q) draw per block.
pub fn sample_assignments<R: Rng + ?Sized>(n_blocks: usize, q: f64, rng: &mut R) -> Vec<Assignment> {
    (0..n_blocks).map(|_| draw(q, rng)).collect()
}

/// Independent draws with a per-block probability.
pub fn sample_assignments_per_block<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> Vec<Assignment> {
    probs.iter().map(|&q| draw(q, rng)).collect()
}

/// Exactly `count` full-rank blocks chosen uniformly without replacement.
pub fn sample_exact_count<R: Rng + ?Sized>(n_blocks: usize, count: usize, rng: &mut R) -> Vec<Assignment> {
    let mut out = vec![Assignment::LowRank; n_blocks];
    for i in index::sample(rng, n_blocks, count.min(n_blocks)) {
        out[i] = Assignment::FullRank;
    }
    out
}

/// Draws the assignments for one period according to the config.
pub fn sample_for_config<R: Rng + ?Sized>(cfg: &GumConfig, rng: &mut R) -> Vec<Assignment> {
    match cfg.sampling {
        SamplingMode::Bernoulli => match &cfg.block_probs {
            Some(p) => sample_assignments_per_block(p, rng),
            None => sample_assignments(cfg.n_blocks, cfg.q(), rng),
        },
        SamplingMode::ExactCount => {
            let count = (cfg.q() * cfg.n_blocks as f64).round() as usize;
            sample_exact_count(cfg.n_blocks, count, rng)
        }
    }
}

fn draw<R: Rng + ?Sized>(q: f64, rng: &mut R) -> Assignment {
    // random::<f64>() lies in [0, 1), so q = 0 never and q = 1 always selects full rank.
    if rng.random::<f64>() < q {
        Assignment::FullRank
    } else {
        Assignment::LowRank
    }
}
