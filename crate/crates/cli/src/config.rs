use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use gum_core::optim::{GumConfig, Method, RngStreams, RunOptions};
use gum_core::problems::ProblemSpec;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::failure::config_error;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct Seeds {
    pub master: u64,
    /// Overrides the gradient-noise stream seed.
    pub grad: Option<u64>,
    /// Overrides the assignment stream seed.
    pub assignment: Option<u64>,
}

impl Seeds {
    pub fn streams(&self) -> RngStreams {
        RngStreams::new(
            self.grad.unwrap_or(self.master),
            self.assignment.unwrap_or(self.master),
        )
    }
}

fn default_steps() -> usize {
    2000
}

fn yes() -> bool {
    true
}

/// One experiment, as read from a JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemSpec,
    pub method: Method,
    #[serde(default)]
    pub optimizer: GumConfig,
    #[serde(default = "default_steps")]
    pub total_steps: usize,
    #[serde(default)]
    pub seeds: Seeds,
    #[serde(default)]
    pub trace: RunOptions,
    /// When set, the step size is picked from this grid by final loss on `tuning_seed`.
    #[serde(default)]
    pub step_size_grid: Option<Vec<f64>>,
    #[serde(default)]
    pub tuning_seed: u64,
    /// Report losses relative to the problem's known minimum.
    #[serde(default = "yes")]
    pub shift_loss: bool,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_error(format!("cannot read {}: {e}", path.display())))?;
        let cfg: Self = serde_json::from_str(&text)
            .map_err(|e| config_error(format!("{}: {e}", path.display())))?;
        cfg.validate()
            .with_context(|| format!("invalid config {}", path.display()))?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.total_steps == 0 {
            return Err(config_error("total_steps must be at least 1"));
        }
        if self.method == Method::GaloreMuon {
            let o = &self.optimizer;
            if o.full_rank_layers != 0 || o.full_rank_prob.is_some_and(|q| q != 0.0) || o.block_probs.is_some() {
                return Err(config_error("galore_muon requires full_rank_layers = 0 and no full-rank probability"));
            }
        }
        if let Some(grid) = &self.step_size_grid {
            if grid.is_empty() || !grid.iter().all(|&x| x.is_finite() && x > 0.0) {
                return Err(config_error("step_size_grid must hold positive step sizes"));
            }
        }
        if self.trace.trace_every == 0 {
            return Err(config_error("trace.trace_every must be at least 1"));
        }
        self.optimizer
            .validate()
            .map_err(|e| config_error(e.to_string()))?;
        let oracle = self.problem.build().map_err(|e| config_error(e.to_string()))?;
        let shapes = oracle.shapes();
        if shapes.len() != self.optimizer.n_blocks {
            return Err(config_error(format!(
                "optimizer.n_blocks is {} but the problem has {} blocks",
                self.optimizer.n_blocks,
                shapes.len()
            )));
        }
        if self.method != Method::Muon {
            self.optimizer
                .validate_shapes(&shapes)
                .map_err(|e| config_error(e.to_string()))?;
        }
        Ok(())
    }

    /// Hex SHA-256 of the compact JSON encoding.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        let mut c = self.clone();
        c.seeds = Seeds {
            master: seed,
            grad: None,
            assignment: None,
        };
        c
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::failure::exit_code;

    fn base() -> ExperimentConfig {
        serde_json::from_str(r#"{"problem": {"name": "counterexample"}, "method": "gum"}"#).unwrap()
    }

    #[test]
    fn defaults_fill_in() {
        let c = base();
        assert_eq!(c.total_steps, 2000);
        assert!(c.shift_loss);
        assert_eq!(c.optimizer, GumConfig::default());
        c.validate().unwrap();
    }

    #[test]
    fn galore_rejects_full_rank_layers() {
        let mut c = base();
        c.method = Method::GaloreMuon;
        c.optimizer.full_rank_prob = Some(0.5);
        assert_eq!(exit_code(&c.validate().unwrap_err()), 2);
    }

    #[test]
    fn block_count_must_match() {
        let mut c = base();
        c.optimizer.n_blocks = 2;
        assert!(c.validate().is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = base();
        assert_eq!(a.hash(), base().hash());
        assert_ne!(a.hash(), a.with_seed(5).hash());
    }

    #[test]
    fn unknown_fields_rejected() {
        let r: std::result::Result<ExperimentConfig, _> =
            serde_json::from_str(r#"{"problem": {"name": "counterexample"}, "method": "gum", "extra": 1}"#);
        assert!(r.is_err());
    }
}
