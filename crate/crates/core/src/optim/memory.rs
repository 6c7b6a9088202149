//! Optimizer-state scalar counts.
//!
//! Counts are exact scalar totals for the Muon-family states (one momentum
//! buffer plus the projector), not asymptotic orders. For an `m × n` block
//! with `m ≤ n` and rank `r`:
//!
//! | method     | scalars                                    |
//! |------------|--------------------------------------------|
//! | full       | `m·n`                                      |
//! | GaLore     | `m·r + r·n`                                |
//! | GUM (E)    | `(1−q)(m·r + r·n) + q(m·r + m·n)`          |
//! | GUM (worst)| `m·r + m·n`                                |

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MemoryReport {
    pub full_training: u64,
    pub galore: u64,
    /// Expectation over the full-rank draw; fractional in general.
    pub gum_expected: f64,
    pub gum_worst_case: u64,
}

impl MemoryReport {
    fn zero() -> Self {
        Self {
            full_training: 0,
            galore: 0,
            gum_expected: 0.0,
            gum_worst_case: 0,
        }
    }

    fn add(&mut self, other: &MemoryReport) {
        self.full_training += other.full_training;
        self.galore += other.galore;
        self.gum_expected += other.gum_expected;
        self.gum_worst_case += other.gum_worst_case;
    }
}

/// Scalar counts for one block; the shape is oriented so `m ≤ n`.
pub fn memory_footprint(m: usize, n: usize, r: usize, q: f64) -> Result<MemoryReport> {
    let (m, n) = (m.min(n), m.max(n));
    if m == 0 || r == 0 || r > m {
        return Err(Error::input(format!("rank {r} outside 1..={m}")));
    }
    if !(q.is_finite() && q >= 0.0) {
        return Err(Error::input(format!("probability {q} must be finite and nonnegative")));
    }
    let (m, n, r) = (m as u64, n as u64, r as u64);
    let low = m * r + r * n;
    let high = m * r + m * n;
    Ok(MemoryReport {
        full_training: m * n,
        galore: low,
        gum_expected: (1.0 - q) * low as f64 + q * high as f64,
        gum_worst_case: high,
    })
}

/// Full-rank probability at which GUM at rank `r_small` matches GaLore at rank `r`
/// on a square `m × m` block: `q = 2(r − r′)/(m − r′)`.
pub fn equal_memory_q(m: usize, r: usize, r_small: usize) -> Result<f64> {
    if !(r_small < r && r <= m) {
        return Err(Error::input(format!(
            "need r' < r <= m, got r'={r_small}, r={r}, m={m}"
        )));
    }
    Ok(2.0 * (r - r_small) as f64 / (m - r_small) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockMemory {
    pub shape: (usize, usize),
    /// GaLore counts at the GaLore rank.
    pub galore: MemoryReport,
    /// GUM counts at the (usually smaller) GUM rank.
    pub gum: MemoryReport,
}

/// Per-block and total counts for a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMemory {
    pub galore_rank: usize,
    pub gum_rank: usize,
    pub q: f64,
    pub blocks: Vec<BlockMemory>,
    pub total_galore: MemoryReport,
    pub total_gum: MemoryReport,
    /// `E[GUM] ≤ GaLore` in total.
    pub gum_within_galore_budget: bool,
}

pub fn model_memory(
    shapes: &[(usize, usize)],
    galore_rank: usize,
    gum_rank: usize,
    q: f64,
) -> Result<ModelMemory> {
    let mut total_galore = MemoryReport::zero();
    let mut total_gum = MemoryReport::zero();
    let mut blocks = Vec::with_capacity(shapes.len());
    for &(m, n) in shapes {
        let galore = memory_footprint(m, n, galore_rank, q)?;
        let gum = memory_footprint(m, n, gum_rank, q)?;
        total_galore.add(&galore);
        total_gum.add(&gum);
        blocks.push(BlockMemory {
            shape: (m, n),
            galore,
            gum,
        });
    }
    Ok(ModelMemory {
        galore_rank,
        gum_rank,
        q,
        gum_within_galore_budget: total_gum.gum_expected <= total_galore.galore as f64,
        blocks,
        total_galore,
        total_gum,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn q_zero_matches_galore() {
        let r = memory_footprint(16, 24, 4, 0.0).unwrap();
        assert_eq!(r.gum_expected, r.galore as f64);
        assert_eq!(r.galore, 16 * 4 + 4 * 24);
        assert_eq!(r.full_training, 16 * 24);
        assert_eq!(r.gum_worst_case, 16 * 4 + 16 * 24);
    }

    #[test]
    fn orientation_is_normalized() {
        assert_eq!(
            memory_footprint(24, 16, 4, 0.3).unwrap(),
            memory_footprint(16, 24, 4, 0.3).unwrap()
        );
    }

    #[test]
    fn counterexample_pairing() {
        // GaLore rank 12 vs GUM rank 2 at q = 0.5 on a 20x20 block.
        let galore = memory_footprint(20, 20, 12, 0.5).unwrap().galore;
        let gum = memory_footprint(20, 20, 2, 0.5).unwrap().gum_expected;
        assert_eq!(galore, 480);
        assert_eq!(gum, 260.0);
        // Equal-memory probability for this pairing would be 10/9 > 1.
        assert!((equal_memory_q(20, 12, 2).unwrap() - 20.0 / 18.0).abs() < 1e-15);
    }

    #[test]
    fn three_block_toy_by_hand() {
        let m = model_memory(&[(64, 64); 3], 16, 4, 1.0 / 3.0).unwrap();
        assert_eq!(m.total_galore.galore, 3 * (64 * 16 * 2));
        // Per block: (2/3)(512) + (1/3)(256 + 4096) = 341.33.. + 1450.66.. = 1792
        assert!((m.total_gum.gum_expected - 3.0 * 1792.0).abs() < 1e-9);
        assert!(m.gum_within_galore_budget);
    }

    #[test]
    fn rejects_bad_rank() {
        assert!(memory_footprint(4, 8, 5, 0.1).is_err());
        assert!(memory_footprint(4, 8, 0, 0.1).is_err());
        assert!(equal_memory_q(10, 2, 2).is_err());
    }
}
