use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use gum_core::metrics::{write_trace_csv, TraceRecord};
use gum_core::optim::{save_checkpoint, Trainer};
use gum_core::Matrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::failure::config_error;

pub const THREADS_ENV: &str = "GUM_BENCH_THREADS";

pub struct RunResult {
    pub trace: Vec<TraceRecord>,
    pub diverged: bool,
    pub trainer: Trainer,
}

impl RunResult {
    pub fn final_loss(&self) -> f64 {
        self.trace.last().map_or(f64::NAN, |r| r.loss)
    }

    pub fn initial_loss(&self) -> f64 {
        self.trace.first().map_or(f64::NAN, |r| r.loss)
    }
}

/// Runs the config as given; the step size is not tuned.
pub fn run(cfg: &ExperimentConfig) -> Result<RunResult> {
    let oracle = cfg.problem.build().map_err(|e| config_error(e.to_string()))?;
    let init: Vec<Matrix> = oracle
        .shapes()
        .into_iter()
        .map(|(m, n)| Matrix::zeros(m, n))
        .collect();
    let mut opts = cfg.trace.clone();
    if cfg.shift_loss {
        opts.loss_offset = oracle.optimal_value().unwrap_or(0.0);
    }
    let mut trainer = Trainer::new(cfg.method, cfg.optimizer.clone(), init, cfg.seeds.streams())
        .map_err(|e| config_error(e.to_string()))?;
    let out = trainer.run(oracle.as_ref(), cfg.total_steps, &opts)?;
    Ok(RunResult {
        trace: out.trace,
        diverged: out.diverged,
        trainer,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TuningResult {
    pub chosen: f64,
    /// `(step size, final loss)`; diverged runs score `+∞`.
    pub scores: Vec<(f64, f64)>,
}

/// Picks the grid point with the lowest final loss on the tuning seed; ties go to the earlier point.
pub fn tune_step_size(cfg: &ExperimentConfig, grid: &[f64]) -> Result<TuningResult> {
    let mut scores = Vec::with_capacity(grid.len());
    for &eta in grid {
        let mut c = cfg.with_seed(cfg.tuning_seed);
        c.optimizer.step_size = eta;
        c.step_size_grid = None;
        let r = run(&c)?;
        let score = if r.diverged { f64::INFINITY } else { r.final_loss() };
        scores.push((eta, score));
    }
    let chosen = scores
        .iter()
        .fold(None::<(f64, f64)>, |best, &(eta, s)| match best {
            Some((_, bs)) if bs <= s => best,
            _ => Some((eta, s)),
        })
        .map(|(eta, _)| eta)
        .ok_or_else(|| config_error("empty step-size grid"))?;
    Ok(TuningResult { chosen, scores })
}

/// Applies step-size tuning if the config asks for it.
pub fn resolve(cfg: &ExperimentConfig) -> Result<(ExperimentConfig, Option<TuningResult>)> {
    let mut resolved = cfg.clone();
    let tuning = match &cfg.step_size_grid {
        Some(grid) => {
            let t = tune_step_size(cfg, grid)?;
            resolved.optimizer.step_size = t.chosen;
            Some(t)
        }
        None => None,
    };
    Ok((resolved, tuning))
}

/// Worker count: `GUM_BENCH_THREADS` if set, else the machine's parallelism.
pub fn worker_threads() -> usize {
    let available = std::thread::available_parallelism().map_or(1, |n| n.get());
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or(available)
}

/// Maps `f` over `items` on a pool of `threads` workers; output order matches input order.
pub fn parallel_map<T, U, F>(items: &[T], threads: usize, f: F) -> Result<Vec<U>>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .context("building worker pool")?;
    Ok(pool.install(|| items.par_iter().map(&f).collect()))
}

/// Runs one config over several seeds in parallel.
pub fn run_seeds(cfg: &ExperimentConfig, seeds: &[u64], threads: usize) -> Result<Vec<RunResult>> {
    parallel_map(seeds, threads, |&s| run(&cfg.with_seed(s)))?
        .into_iter()
        .collect()
}

#[derive(Debug, Serialize)]
struct Summary<'a> {
    method: &'a str,
    seed: u64,
    steps_completed: usize,
    diverged: bool,
    initial_loss: f64,
    final_loss: f64,
    step_size: f64,
    tuning: Option<&'a TuningResult>,
    config_hash: String,
    /// Fraction of periods in which each block was full-rank.
    full_rank_frequency: Vec<f64>,
    periods: usize,
}

/// Per-block fraction of logged periods with a full-rank assignment.
pub fn full_rank_frequency(log: &[String], n_blocks: usize) -> Vec<f64> {
    let mut counts = vec![0usize; n_blocks];
    for bits in log {
        for (i, c) in bits.chars().enumerate().take(n_blocks) {
            if c == '1' {
                counts[i] += 1;
            }
        }
    }
    counts
        .into_iter()
        .map(|c| if log.is_empty() { 0.0 } else { c as f64 / log.len() as f64 })
        .collect()
}

/// Writes `trace.csv`, `config.json`, `config.sha256`, `summary.json` and a final `checkpoint/`.
pub fn write_outputs(
    dir: &Path,
    cfg: &ExperimentConfig,
    tuning: Option<&TuningResult>,
    result: &RunResult,
) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let trace_file = fs::File::create(dir.join("trace.csv"))?;
    write_trace_csv(&result.trace, std::io::BufWriter::new(trace_file))?;
    fs::write(dir.join("config.json"), serde_json::to_vec_pretty(cfg)?)?;
    fs::write(dir.join("config.sha256"), format!("{}\n", cfg.hash()))?;
    let log = result.trainer.assignment_log();
    let summary = Summary {
        method: cfg.method.name(),
        seed: cfg.seeds.master,
        steps_completed: result.trainer.step(),
        diverged: result.diverged,
        initial_loss: result.initial_loss(),
        final_loss: result.final_loss(),
        step_size: cfg.optimizer.step_size,
        tuning,
        config_hash: cfg.hash(),
        full_rank_frequency: full_rank_frequency(log, result.trainer.blocks().len()),
        periods: log.len(),
    };
    fs::write(dir.join("summary.json"), serde_json::to_vec_pretty(&summary)?)?;
    save_checkpoint(&dir.join("checkpoint"), &result.trainer)?;
    Ok(())
}

/// CSV bytes of a trace.
pub fn trace_csv_bytes(trace: &[TraceRecord]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_trace_csv(trace, &mut buf)?;
    Ok(buf)
}
