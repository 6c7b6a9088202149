//! The optimizer family and its training loop.

mod checkpoint;
mod config;
mod memory;
mod paradigm;
mod runner;
mod sampling;
mod state;
mod steps;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, Manifest, RngState, StreamState, MANIFEST_FILE};
pub use config::{GumConfig, MsignMode, SamplingMode};
pub use memory::{equal_memory_q, memory_footprint, model_memory, BlockMemory, MemoryReport, ModelMemory};
pub use paradigm::{
    unbiased_paradigm_step, BaseOptimizer, GaloreRule, MomentumSgd, MuonBase, ProjectorRefresh, ProjectorRule,
    RandomOrthonormalRule,
};
pub use runner::{
    derive_seed, GradientOracle, Method, RngStreams, RunOptions, RunOutcome, Trainer, TrainerSnapshot,
    DIVERGENCE_LOSS,
};
pub use sampling::{sample_assignments, sample_assignments_per_block, sample_exact_count, sample_for_config};
pub use state::{galore_projector, Assignment, BlockState, Projector, PROJECTOR_TOL};
pub use steps::{
    effective_gradient, full_rank_increment, galore_muon_step, gum_full_rank_step, gum_low_rank_step, gum_step,
    low_rank_increment, low_rank_scale, muon_step, projector_unused,
};
