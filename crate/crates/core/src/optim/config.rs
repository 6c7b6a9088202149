use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::{msign_exact, newton_schulz, Matrix, NewtonSchulzCoeffs};

/// How the matrix sign of the momentum is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MsignMode {
    #[default]
    NewtonSchulz,
    /// SVD-based `U Vᵀ`, the exact sign.
    ExactOracle,
}

/// How blocks are assigned to full-rank updates at each period start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    /// Independent Bernoulli(q) per block.
    #[default]
    Bernoulli,
    /// Exactly `round(q · N_L)` blocks drawn without replacement.
    ExactCount,
}

/// Hyperparameters shared by the whole optimizer family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GumConfig {
    /// Inner iterations per period (`K`).
    pub period: usize,
    /// Projection rank (`r`).
    pub rank: usize,
    /// Number of blocks updated full-rank per period in expectation (`γ`).
    pub full_rank_layers: usize,
    /// Number of parameter blocks (`N_L`).
    pub n_blocks: usize,
    /// Overrides `γ / N_L` when set.
    pub full_rank_prob: Option<f64>,
    /// Per-block override of the full-rank probability.
    pub block_probs: Option<Vec<f64>>,
    pub momentum: f64,
    pub step_size: f64,
    /// Per-step learning rates; steps past the end fall back to `step_size`.
    pub step_schedule: Option<Vec<f64>>,
    /// Scale `PPᵀG` by `(1 − q)` in the full-rank branch (and drop the `1/(1 − q)` low-rank boost).
    pub compensated_variant: bool,
    /// Multiply incoming gradients by `(1 − β)`.
    pub use_damping: bool,
    pub msign_mode: MsignMode,
    pub newton_schulz: NewtonSchulzCoeffs,
    pub sampling: SamplingMode,
    /// Zero plain Muon momentum at every period boundary too.
    pub muon_period_restart: bool,
}

impl Default for GumConfig {
    fn default() -> Self {
        Self {
            period: 50,
            rank: 2,
            full_rank_layers: 0,
            n_blocks: 1,
            full_rank_prob: None,
            block_probs: None,
            momentum: 0.9,
            step_size: 1e-2,
            step_schedule: None,
            compensated_variant: false,
            use_damping: false,
            msign_mode: MsignMode::NewtonSchulz,
            newton_schulz: NewtonSchulzCoeffs::default(),
            sampling: SamplingMode::Bernoulli,
            muon_period_restart: false,
        }
    }
}

impl GumConfig {
    /// Global full-rank probability `q`.
    pub fn q(&self) -> f64 {
        self.full_rank_prob
            .unwrap_or(self.full_rank_layers as f64 / self.n_blocks as f64)
    }

    /// `q_ℓ` for one block, honouring the per-block table.
    pub fn q_for(&self, block: usize) -> f64 {
        match &self.block_probs {
            Some(p) => p[block],
            None => self.q(),
        }
    }

    /// Coefficient applied to incoming gradients.
    pub fn damping(&self) -> f64 {
        if self.use_damping {
            1.0 - self.momentum
        } else {
            1.0
        }
    }

    pub fn learning_rate(&self, step: usize) -> f64 {
        self.step_schedule
            .as_ref()
            .and_then(|s| s.get(step).copied())
            .unwrap_or(self.step_size)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidInput(msg));
        if self.period == 0 {
            return bad("period must be at least 1".into());
        }
        if self.rank == 0 {
            return bad("rank must be at least 1".into());
        }
        if self.n_blocks == 0 {
            return bad("n_blocks must be at least 1".into());
        }
        if self.full_rank_layers > self.n_blocks {
            return bad(format!(
                "full_rank_layers {} exceeds n_blocks {}",
                self.full_rank_layers, self.n_blocks
            ));
        }
        let in_unit = |q: f64| q.is_finite() && (0.0..=1.0).contains(&q);
        if !in_unit(self.q()) {
            return bad(format!("full-rank probability {} outside [0, 1]", self.q()));
        }
        if let Some(p) = &self.block_probs {
            if p.len() != self.n_blocks {
                return bad(format!("block_probs has {} entries for {} blocks", p.len(), self.n_blocks));
            }
            if !p.iter().all(|&q| in_unit(q)) {
                return bad("block_probs entries must lie in [0, 1]".into());
            }
        }
        if !(self.momentum.is_finite() && (0.0..1.0).contains(&self.momentum)) {
            return bad(format!("momentum {} outside [0, 1)", self.momentum));
        }
        let positive = |x: f64| x.is_finite() && x > 0.0;
        if !positive(self.step_size) {
            return bad(format!("step size {} must be positive", self.step_size));
        }
        if let Some(s) = &self.step_schedule {
            if !s.iter().all(|&x| positive(x)) {
                return bad("step schedule entries must be positive".into());
            }
        }
        self.newton_schulz.validate()
    }

    /// Checks the rank against every block's short side.
    pub fn validate_shapes(&self, shapes: &[(usize, usize)]) -> Result<()> {
        self.validate()?;
        if shapes.len() != self.n_blocks {
            return Err(Error::input(format!(
                "config declares {} blocks, problem has {}",
                self.n_blocks,
                shapes.len()
            )));
        }
        for (i, &(m, n)) in shapes.iter().enumerate() {
            if self.rank > m.min(n) {
                return Err(Error::input(format!(
                    "rank {} exceeds block {i} short side {}",
                    self.rank,
                    m.min(n)
                )));
            }
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    /// Orthogonalized update direction; zero maps to zero in both modes.
    pub fn orthogonalize(&self, x: &Matrix) -> Result<Matrix> {
        if x.is_zero() {
            return Ok(Matrix::zeros(x.rows(), x.cols()));
        }
        match self.msign_mode {
            MsignMode::NewtonSchulz => newton_schulz(x, &self.newton_schulz),
            MsignMode::ExactOracle => msign_exact(x),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn q_comes_from_gamma_unless_overridden() {
        let mut cfg = GumConfig {
            full_rank_layers: 1,
            n_blocks: 4,
            ..Default::default()
        };
        assert_eq!(cfg.q(), 0.25);
        cfg.full_rank_prob = Some(0.5);
        assert_eq!(cfg.q(), 0.5);
        cfg.block_probs = Some(vec![0.1, 0.2, 0.3, 0.4]);
        assert_eq!(cfg.q_for(2), 0.3);
    }

    #[test]
    fn validation_catches_ranges() {
        assert!(GumConfig::default().validate().is_ok());
        let cases = [
            GumConfig { period: 0, ..Default::default() },
            GumConfig { momentum: 1.0, ..Default::default() },
            GumConfig { step_size: 0.0, ..Default::default() },
            GumConfig { full_rank_layers: 2, n_blocks: 1, ..Default::default() },
            GumConfig { full_rank_prob: Some(1.5), ..Default::default() },
            GumConfig { block_probs: Some(vec![0.5, 0.5]), ..Default::default() },
        ];
        for c in cases {
            assert!(c.validate().is_err(), "{c:?}");
        }
        let cfg = GumConfig { rank: 5, ..Default::default() };
        assert!(cfg.validate_shapes(&[(4, 9)]).is_err());
        assert!(cfg.validate_shapes(&[(9, 5)]).is_ok());
    }

    #[test]
    fn schedule_falls_back_to_constant() {
        let cfg = GumConfig {
            step_size: 0.1,
            step_schedule: Some(vec![1.0, 0.5]),
            ..Default::default()
        };
        assert_eq!(cfg.learning_rate(1), 0.5);
        assert_eq!(cfg.learning_rate(2), 0.1);
    }

    #[test]
    fn json_round_trip_and_hash_stability() {
        let cfg = GumConfig::default();
        let text = serde_json::to_string(&cfg).unwrap();
        let back: GumConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
        let other = GumConfig { rank: 3, ..cfg.clone() };
        assert_ne!(other.hash(), cfg.hash());
        assert!(serde_json::from_str::<GumConfig>(r#"{"bogus": 1}"#).is_err());
    }
}
