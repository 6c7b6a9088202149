//! Period-structured training loop shared by every method.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{trace_norm, Matrix};
use crate::metrics::{stable_rank_trace, TraceRecord};
use crate::optim::config::GumConfig;
use crate::optim::paradigm::{
    unbiased_paradigm_step, BaseOptimizer, GaloreRule, MuonBase, ProjectorRefresh, ProjectorRule,
};
use crate::optim::sampling::sample_for_config;
use crate::optim::state::{galore_projector, Assignment, BlockState};
use crate::optim::steps::{galore_muon_step, gum_step, muon_step, projector_unused};

/// Loss values above this (or non-finite) end a run as diverged.
pub const DIVERGENCE_LOSS: f64 = 1e12;

const GRAD_STREAM: u64 = 1;
const ASSIGN_STREAM: u64 = 2;

/// Gradient source for a list of parameter blocks.
pub trait GradientOracle {
    fn shapes(&self) -> Vec<(usize, usize)>;
    fn loss(&self, weights: &[Matrix]) -> Result<f64>;
    fn true_gradient(&self, weights: &[Matrix]) -> Result<Vec<Matrix>>;
    fn stochastic_gradient(&self, weights: &[Matrix], rng: &mut ChaCha8Rng) -> Result<Vec<Matrix>>;
    /// Known minimum of the loss, if any.
    fn optimal_value(&self) -> Option<f64> {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Muon,
    GaloreMuon,
    Gum,
    UnbiasedGeneric,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Muon => "muon",
            Method::GaloreMuon => "galore_muon",
            Method::Gum => "gum",
            Method::UnbiasedGeneric => "unbiased_generic",
        }
    }

    fn projected(self) -> bool {
        !matches!(self, Method::Muon)
    }
}

/// Independent RNG streams for gradient noise and block assignments.
#[derive(Debug, Clone, PartialEq)]
pub struct RngStreams {
    pub grad: ChaCha8Rng,
    pub assignment: ChaCha8Rng,
}

impl RngStreams {
    /// Both streams keyed by one master seed, on different ChaCha streams.
    pub fn from_master(seed: u64) -> Self {
        Self::new(seed, seed)
    }

    pub fn new(grad_seed: u64, assignment_seed: u64) -> Self {
        let mut grad = ChaCha8Rng::seed_from_u64(grad_seed);
        grad.set_stream(GRAD_STREAM);
        let mut assignment = ChaCha8Rng::seed_from_u64(assignment_seed);
        assignment.set_stream(ASSIGN_STREAM);
        Self { grad, assignment }
    }
}

/// What to record while running.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunOptions {
    /// Record every this many steps (the last step is always recorded).
    pub trace_every: usize,
    /// Measure the projection residual every this many steps; 0 disables.
    pub chi_every: usize,
    pub record_initial: bool,
    pub stable_rank: bool,
    /// Subtracted from every recorded loss.
    pub loss_offset: f64,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            trace_every: 1,
            chi_every: 20,
            record_initial: true,
            stable_rank: true,
            loss_offset: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub trace: Vec<TraceRecord>,
    /// Loss went non-finite or past [`DIVERGENCE_LOSS`]; the trace stops before it.
    pub diverged: bool,
}

/// Everything needed to resume a run, minus the config.
#[derive(Debug, Clone)]
pub struct TrainerSnapshot {
    pub method: Method,
    pub blocks: Vec<BlockState>,
    pub rngs: RngStreams,
    pub step: usize,
    pub step_in_period: usize,
    pub period_index: usize,
}

/// Sequential, deterministic driver for one optimization run.
pub struct Trainer {
    method: Method,
    cfg: GumConfig,
    blocks: Vec<BlockState>,
    rngs: RngStreams,
    step: usize,
    step_in_period: usize,
    period_index: usize,
    base: Box<dyn BaseOptimizer>,
    rule: Box<dyn ProjectorRule>,
    refresh: ProjectorRefresh,
    assignment_log: Vec<String>,
}

impl Trainer {
    pub fn new(method: Method, cfg: GumConfig, init: Vec<Matrix>, rngs: RngStreams) -> Result<Self> {
        let blocks = init.into_iter().map(BlockState::new).collect();
        Self::from_snapshot(
            cfg,
            TrainerSnapshot {
                method,
                blocks,
                rngs,
                step: 0,
                step_in_period: 0,
                period_index: 0,
            },
        )
    }

    pub fn from_snapshot(cfg: GumConfig, snap: TrainerSnapshot) -> Result<Self> {
        let shapes: Vec<_> = snap.blocks.iter().map(BlockState::shape).collect();
        if snap.method.projected() {
            cfg.validate_shapes(&shapes)?;
        } else {
            cfg.validate()?;
            if cfg.n_blocks != shapes.len() {
                return Err(Error::input(format!(
                    "config declares {} blocks, problem has {}",
                    cfg.n_blocks,
                    shapes.len()
                )));
            }
        }
        if snap.step_in_period >= cfg.period {
            return Err(Error::state(format!(
                "step {} inside a period of length {}",
                snap.step_in_period, cfg.period
            )));
        }
        Ok(Self {
            method: snap.method,
            base: Box::new(MuonBase::from_config(&cfg)),
            rule: Box::new(GaloreRule),
            refresh: ProjectorRefresh::PerPeriod,
            assignment_log: Vec::new(),
            cfg,
            blocks: snap.blocks,
            rngs: snap.rngs,
            step: snap.step,
            step_in_period: snap.step_in_period,
            period_index: snap.period_index,
        })
    }

    /// Base optimizer for [`Method::UnbiasedGeneric`].
    pub fn with_base(mut self, base: Box<dyn BaseOptimizer>) -> Self {
        self.base = base;
        self
    }

    /// Projector rule for [`Method::UnbiasedGeneric`].
    pub fn with_projector_rule(mut self, rule: Box<dyn ProjectorRule>, refresh: ProjectorRefresh) -> Self {
        self.rule = rule;
        self.refresh = refresh;
        self
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn config(&self) -> &GumConfig {
        &self.cfg
    }

    pub fn blocks(&self) -> &[BlockState] {
        &self.blocks
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn step_in_period(&self) -> usize {
        self.step_in_period
    }

    pub fn period_index(&self) -> usize {
        self.period_index
    }

    pub fn rngs(&self) -> &RngStreams {
        &self.rngs
    }

    pub fn snapshot(&self) -> TrainerSnapshot {
        TrainerSnapshot {
            method: self.method,
            blocks: self.blocks.clone(),
            rngs: self.rngs.clone(),
            step: self.step,
            step_in_period: self.step_in_period,
            period_index: self.period_index,
        }
    }

    /// Weights in caller orientation.
    pub fn weights(&self) -> Vec<Matrix> {
        self.blocks.iter().map(BlockState::weights).collect()
    }

    pub fn assignment_bits(&self) -> String {
        self.blocks.iter().map(|b| b.assignment.bit()).collect()
    }

    /// Assignment bits of every period started by this trainer instance.
    pub fn assignment_log(&self) -> &[String] {
        &self.assignment_log
    }

    pub fn memory_scalars(&self) -> usize {
        self.blocks.iter().map(BlockState::state_scalars).sum()
    }

    fn begin_period(&mut self, grads: &[Matrix]) -> Result<()> {
        let period = self.period_index;
        match self.method {
            Method::Muon => {
                if self.cfg.muon_period_restart || period == 0 {
                    for b in &mut self.blocks {
                        b.restart(Assignment::FullRank, None, 1.0)?;
                    }
                }
            }
            Method::GaloreMuon => {
                for (b, g) in self.blocks.iter_mut().zip(grads) {
                    let p = galore_projector(&b.orient(g)?, self.cfg.rank)?;
                    b.restart(Assignment::LowRank, Some(p), 0.0)?;
                }
            }
            Method::Gum | Method::UnbiasedGeneric => {
                let assignments = sample_for_config(&self.cfg, &mut self.rngs.assignment);
                for (l, ((b, g), a)) in self.blocks.iter_mut().zip(grads).zip(assignments).enumerate() {
                    let q = self.cfg.q_for(l);
                    let p = if a == Assignment::FullRank && projector_unused(q, self.cfg.compensated_variant) {
                        None
                    } else if self.method == Method::Gum {
                        Some(galore_projector(&b.orient(g)?, self.cfg.rank)?)
                    } else {
                        Some(self.rule.projector(&b.orient(g)?, self.cfg.rank)?)
                    };
                    b.restart(a, p, q)?;
                }
            }
        }
        for b in &mut self.blocks {
            b.period_index = period;
        }
        self.assignment_log.push(self.assignment_bits());
        Ok(())
    }

    /// Aggregate `‖G − PPᵀG‖_F / ‖G‖_F` over blocks holding a projector.
    fn projection_residual(&self, grads: &[Matrix]) -> Result<Option<f64>> {
        let (mut num, mut den) = (0.0, 0.0);
        let mut any = false;
        for (b, g) in self.blocks.iter().zip(grads) {
            if let Some(p) = &b.projector {
                let g = b.orient(g)?;
                num += g.sub(&p.project_lift(&g)).frobenius_norm_sq();
                den += g.frobenius_norm_sq();
                any = true;
            }
        }
        Ok((any && den > 0.0).then(|| (num / den).sqrt()))
    }

    /// One inner iteration. At a period boundary the fresh gradient sets the
    /// projectors and is then used for the step itself. Returns the
    /// projection residual of this step's gradient when `want_chi` is set.
    pub fn step_once(&mut self, oracle: &dyn GradientOracle, want_chi: bool) -> Result<Option<f64>> {
        let weights = self.weights();
        let grads = oracle.stochastic_gradient(&weights, &mut self.rngs.grad)?;
        if grads.len() != self.blocks.len() {
            return Err(Error::input(format!(
                "oracle returned {} gradients for {} blocks",
                grads.len(),
                self.blocks.len()
            )));
        }
        if self.step_in_period == 0 {
            self.begin_period(&grads)?;
        }
        let lr = self.cfg.learning_rate(self.step);
        let chi = if want_chi { self.projection_residual(&grads)? } else { None };
        for (b, g) in self.blocks.iter_mut().zip(&grads) {
            match self.method {
                Method::Muon => muon_step(b, g, &self.cfg, lr)?,
                Method::GaloreMuon => galore_muon_step(b, g, &self.cfg, lr)?,
                Method::Gum => gum_step(b, g, &self.cfg, lr)?,
                Method::UnbiasedGeneric => {
                    if self.refresh == ProjectorRefresh::PerStep && self.step_in_period > 0 && b.projector.is_some() {
                        b.projector = Some(self.rule.projector(&b.orient(g)?, self.cfg.rank)?);
                    }
                    unbiased_paradigm_step(b, g, self.base.as_ref(), self.cfg.compensated_variant, lr)?
                }
            }
        }
        self.step += 1;
        self.step_in_period += 1;
        if self.step_in_period == self.cfg.period {
            self.step_in_period = 0;
            self.period_index += 1;
        }
        Ok(chi)
    }

    /// Runs one full period from a period boundary.
    pub fn run_period(&mut self, oracle: &dyn GradientOracle, opts: &RunOptions) -> Result<RunOutcome> {
        if self.step_in_period != 0 {
            return Err(Error::state("run_period called mid-period"));
        }
        self.run(oracle, self.cfg.period, opts)
    }

    pub fn record(&self, oracle: &dyn GradientOracle, opts: &RunOptions, chi: Option<f64>) -> Result<TraceRecord> {
        let weights = self.weights();
        let loss = oracle.loss(&weights)? - opts.loss_offset;
        let mut grad_trace_norm = 0.0;
        for g in oracle.true_gradient(&weights)? {
            grad_trace_norm += trace_norm(&g)?;
        }
        let (stable_ranks, stable_rank_mean, zero_blocks_skipped) = if opts.stable_rank {
            let s = stable_rank_trace(&self.blocks)?;
            (s.per_block.into_iter().flatten().collect(), s.mean, s.zero_blocks_skipped)
        } else {
            (Vec::new(), None, false)
        };
        Ok(TraceRecord {
            step: self.step,
            loss,
            grad_trace_norm,
            chi_residual: chi,
            stable_ranks,
            stable_rank_mean,
            zero_blocks_skipped,
            memory_scalars: self.memory_scalars(),
            assignment_bits: self.assignment_bits(),
        })
    }

    /// Advances `steps` iterations, recording at the configured cadence.
    pub fn run(&mut self, oracle: &dyn GradientOracle, steps: usize, opts: &RunOptions) -> Result<RunOutcome> {
        if opts.trace_every == 0 {
            return Err(Error::input("trace_every must be at least 1"));
        }
        let mut trace = Vec::new();
        if opts.record_initial && self.step == 0 {
            trace.push(self.record(oracle, opts, None)?);
        }
        let mut pending_chi = None;
        for i in 0..steps {
            let want_chi = opts.chi_every > 0 && (self.step + 1) % opts.chi_every == 0;
            let chi = self.step_once(oracle, want_chi)?;
            if want_chi {
                pending_chi = chi;
            }
            let loss = oracle.loss(&self.weights())?;
            if !loss.is_finite() || loss.abs() > DIVERGENCE_LOSS {
                return Ok(RunOutcome { trace, diverged: true });
            }
            if self.step % opts.trace_every == 0 || i + 1 == steps {
                trace.push(self.record(oracle, opts, pending_chi.take())?);
            }
        }
        Ok(RunOutcome { trace, diverged: false })
    }
}

/// Draws a `u64` seed from an RNG, for deriving per-run seeds.
pub fn derive_seed(rng: &mut ChaCha8Rng) -> u64 {
    rng.next_u64()
}
