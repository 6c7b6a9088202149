//! On-disk trainer state: one binary file per block matrix plus `manifest.json`.
//!
//! Matrices are written in the block's internal orientation (`rows ≤ cols`);
//! `transposed[i]` in the manifest records whether block `i` is the transpose
//! of the caller's matrix.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::optim::config::GumConfig;
use crate::optim::runner::{Method, RngStreams, Trainer, TrainerSnapshot};
use crate::optim::state::{Assignment, BlockState, Projector};

pub const MANIFEST_FILE: &str = "manifest.json";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamState {
    /// Hex of the 32-byte ChaCha key.
    pub seed: String,
    pub stream: u64,
    /// Decimal `u128` word position.
    pub word_pos: String,
}

impl StreamState {
    fn capture(rng: &ChaCha8Rng) -> Self {
        Self {
            seed: hex::encode(rng.get_seed()),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos().to_string(),
        }
    }

    fn restore(&self) -> Result<ChaCha8Rng> {
        let bytes = hex::decode(&self.seed).map_err(|e| Error::Format(format!("rng seed: {e}")))?;
        let seed: [u8; 32] = bytes
            .try_into()
            .map_err(|_| Error::Format("rng seed must be 32 bytes".into()))?;
        let pos: u128 = self
            .word_pos
            .parse()
            .map_err(|e| Error::Format(format!("rng word position: {e}")))?;
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(pos);
        Ok(rng)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub grad: StreamState,
    pub assignment: StreamState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub method: Method,
    pub step: usize,
    pub period_index: usize,
    pub step_in_period: usize,
    pub assignments: Vec<Assignment>,
    pub q: Vec<f64>,
    pub transposed: Vec<bool>,
    pub has_projector: Vec<bool>,
    pub config_hash: String,
    pub config: GumConfig,
    pub rng_state: RngState,
}

fn block_file(i: usize, what: &str) -> String {
    format!("block{i:03}_{what}.bin")
}

fn write_matrix(path: &Path, m: &Matrix) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    m.write_to(&mut w)?;
    std::io::Write::flush(&mut w)?;
    Ok(())
}

fn read_matrix(path: &Path) -> Result<Matrix> {
    let f = File::open(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    Matrix::read_from(BufReader::new(f))
}

pub fn save_checkpoint(dir: &Path, trainer: &Trainer) -> Result<()> {
    fs::create_dir_all(dir)?;
    let blocks = trainer.blocks();
    for (i, b) in blocks.iter().enumerate() {
        write_matrix(&dir.join(block_file(i, "weights")), b.oriented_weights())?;
        write_matrix(&dir.join(block_file(i, "momentum")), &b.momentum)?;
        if let Some(p) = &b.projector {
            write_matrix(&dir.join(block_file(i, "projector")), p.matrix())?;
        }
    }
    let rngs = trainer.rngs();
    let manifest = Manifest {
        version: FORMAT_VERSION,
        method: trainer.method(),
        step: trainer.step(),
        period_index: trainer.period_index(),
        step_in_period: trainer.step_in_period(),
        assignments: blocks.iter().map(|b| b.assignment).collect(),
        q: blocks.iter().map(|b| b.q).collect(),
        transposed: blocks.iter().map(BlockState::is_transposed).collect(),
        has_projector: blocks.iter().map(|b| b.projector.is_some()).collect(),
        config_hash: trainer.config().hash(),
        config: trainer.config().clone(),
        rng_state: RngState {
            grad: StreamState::capture(&rngs.grad),
            assignment: StreamState::capture(&rngs.assignment),
        },
    };
    fs::write(dir.join(MANIFEST_FILE), serde_json::to_vec_pretty(&manifest)?)?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub manifest: Manifest,
    pub snapshot: TrainerSnapshot,
}

impl Checkpoint {
    /// Rebuilds a trainer; the caller's config must hash to the recorded one.
    pub fn resume(self, cfg: GumConfig) -> Result<Trainer> {
        if cfg.hash() != self.manifest.config_hash {
            return Err(Error::state("config does not match the checkpoint's config hash"));
        }
        Trainer::from_snapshot(cfg, self.snapshot)
    }

    /// Rebuilds a trainer with the config stored in the manifest.
    pub fn resume_with_stored_config(self) -> Result<Trainer> {
        let cfg = self.manifest.config.clone();
        self.resume(cfg)
    }
}

pub fn load_checkpoint(dir: &Path) -> Result<Checkpoint> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read(&path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let manifest: Manifest = serde_json::from_slice(&text)?;
    if manifest.version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {}", manifest.version)));
    }
    let n = manifest.assignments.len();
    if manifest.q.len() != n || manifest.transposed.len() != n || manifest.has_projector.len() != n {
        return Err(Error::Format("manifest block lists disagree in length".into()));
    }
    if manifest.config.hash() != manifest.config_hash {
        return Err(Error::Format("stored config does not match its hash".into()));
    }
    let mut blocks = Vec::with_capacity(n);
    for i in 0..n {
        let weights = read_matrix(&dir.join(block_file(i, "weights")))?;
        let momentum = read_matrix(&dir.join(block_file(i, "momentum")))?;
        let projector = if manifest.has_projector[i] {
            let p = Projector::new(read_matrix(&dir.join(block_file(i, "projector")))?)?;
            if p.dim() != weights.rows() {
                return Err(Error::Format(format!("block {i}: projector does not fit weights")));
            }
            Some(p)
        } else {
            None
        };
        let rows = match manifest.assignments[i] {
            Assignment::FullRank => weights.rows(),
            Assignment::LowRank => projector
                .as_ref()
                .map(Projector::rank)
                .ok_or_else(|| Error::Format(format!("block {i}: low-rank without projector")))?,
        };
        if momentum.shape() != (rows, weights.cols()) {
            return Err(Error::Format(format!("block {i}: momentum shape {:?}", momentum.shape())));
        }
        if weights.rows() > weights.cols() {
            return Err(Error::Format(format!("block {i}: weights not in internal orientation")));
        }
        blocks.push(BlockState::from_parts(
            weights,
            manifest.transposed[i],
            momentum,
            projector,
            manifest.assignments[i],
            manifest.q[i],
            manifest.period_index,
        ));
    }
    let snapshot = TrainerSnapshot {
        method: manifest.method,
        blocks,
        rngs: RngStreams {
            grad: manifest.rng_state.grad.restore()?,
            assignment: manifest.rng_state.assignment.restore()?,
        },
        step: manifest.step,
        step_in_period: manifest.step_in_period,
        period_index: manifest.period_index,
    };
    Ok(Checkpoint { manifest, snapshot })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optim::runner::{GradientOracle, RunOptions};
    use crate::Result;

    struct Quad {
        y: Vec<Matrix>,
    }

    impl GradientOracle for Quad {
        fn shapes(&self) -> Vec<(usize, usize)> {
            self.y.iter().map(Matrix::shape).collect()
        }
        fn loss(&self, w: &[Matrix]) -> Result<f64> {
            Ok(w.iter().zip(&self.y).map(|(w, y)| 0.5 * w.sub(y).frobenius_norm_sq()).sum())
        }
        fn true_gradient(&self, w: &[Matrix]) -> Result<Vec<Matrix>> {
            Ok(w.iter().zip(&self.y).map(|(w, y)| w.sub(y)).collect())
        }
        fn stochastic_gradient(&self, w: &[Matrix], rng: &mut ChaCha8Rng) -> Result<Vec<Matrix>> {
            let mut g = self.true_gradient(w)?;
            for gi in &mut g {
                gi.axpy(0.3, &Matrix::random_normal(gi.rows(), gi.cols(), rng));
            }
            Ok(g)
        }
    }

    fn setup() -> (Quad, Trainer) {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let y = vec![Matrix::random_normal(5, 3, &mut rng), Matrix::random_normal(4, 6, &mut rng)];
        let init = y.iter().map(|m| Matrix::zeros(m.rows(), m.cols())).collect();
        let cfg = GumConfig {
            period: 5,
            rank: 2,
            n_blocks: 2,
            full_rank_layers: 1,
            ..Default::default()
        };
        let t = Trainer::new(Method::Gum, cfg, init, RngStreams::from_master(4)).unwrap();
        (Quad { y }, t)
    }

    #[test]
    fn resume_mid_period_continues_identically() {
        let (oracle, mut straight) = setup();
        let opts = RunOptions::default();
        straight.run(&oracle, 7, &opts).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_checkpoint(dir.path(), &straight).unwrap();
        let tail = straight.run(&oracle, 9, &opts).unwrap().trace;

        let ck = load_checkpoint(dir.path()).unwrap();
        assert_eq!(ck.manifest.step_in_period, 2);
        let mut resumed = ck.resume_with_stored_config().unwrap();
        let again = resumed.run(&oracle, 9, &opts).unwrap().trace;
        assert_eq!(tail, again);
        assert_eq!(resumed.weights(), straight.weights());
    }

    #[test]
    fn rejects_foreign_config_and_corruption() {
        let (oracle, mut t) = setup();
        t.run(&oracle, 3, &RunOptions::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_checkpoint(dir.path(), &t).unwrap();
        let other = GumConfig { rank: 1, ..t.config().clone() };
        assert!(matches!(
            load_checkpoint(dir.path()).unwrap().resume(other),
            Err(Error::InvalidState(_))
        ));

        fs::write(dir.path().join(block_file(1, "momentum")), [1u8, 2, 3]).unwrap();
        assert!(load_checkpoint(dir.path()).is_err());
        fs::remove_file(dir.path().join(MANIFEST_FILE)).unwrap();
        assert!(matches!(load_checkpoint(dir.path()), Err(Error::Format(_))));
    }
}
