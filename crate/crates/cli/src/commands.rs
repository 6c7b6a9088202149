//! Subcommand bodies. Each writes its human-readable output to `out`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use gum_core::metrics::{compare_traces, read_trace_csv, spectrum_snapshot, stable_rank_trace, GOLDEN_TOL};
use gum_core::optim::{load_checkpoint, model_memory};
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::experiment::{full_rank_frequency, resolve, run, worker_threads, write_outputs, parallel_map};
use crate::failure::{config_error, numerical_error, verification_error};
use crate::verify::{verify_unbiased, UnbiasedReport};

fn default_out(cfg: &ExperimentConfig, explicit: Option<&Path>) -> PathBuf {
    explicit
        .map(Path::to_path_buf)
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("runs").join(cfg.method.name()))
}

/// Shared body of `run-synthetic` and `run-blockwise`.
pub fn run_experiment(
    config: &Path,
    seeds: &[u64],
    out_dir: Option<&Path>,
    require_blocks: Option<usize>,
    out: &mut dyn Write,
) -> Result<()> {
    let cfg = ExperimentConfig::load(config)?;
    if let Some(min) = require_blocks {
        if cfg.optimizer.n_blocks < min {
            return Err(config_error(format!("run-blockwise needs at least {min} blocks")));
        }
    }
    let (resolved, tuning) = resolve(&cfg)?;
    let base = default_out(&cfg, out_dir);
    let seeds: Vec<u64> = if seeds.is_empty() { vec![cfg.seeds.master] } else { seeds.to_vec() };
    let multi = seeds.len() > 1;
    let results = parallel_map(&seeds, worker_threads(), |&s| {
        let c = if s == cfg.seeds.master && !multi { resolved.clone() } else { resolved.with_seed(s) };
        run(&c).map(|r| (c, r))
    })?;
    let mut diverged = Vec::new();
    for (seed, res) in seeds.iter().zip(results) {
        let (c, r) = res?;
        let dir = if multi { base.join(format!("seed-{seed}")) } else { base.clone() };
        write_outputs(&dir, &c, tuning.as_ref(), &r)?;
        writeln!(
            out,
            "{} seed {}: {} steps, loss {} -> {}, trace in {}",
            c.method.name(),
            seed,
            r.trainer.step(),
            r.initial_loss(),
            r.final_loss(),
            dir.join("trace.csv").display()
        )?;
        if require_blocks.is_some() {
            let freq = full_rank_frequency(r.trainer.assignment_log(), r.trainer.blocks().len());
            writeln!(out, "  full-rank frequency per block: {freq:?}")?;
        }
        if r.diverged {
            diverged.push(*seed);
        }
    }
    if !diverged.is_empty() {
        return Err(numerical_error(format!(
            "loss exceeded {:e} for seeds {diverged:?}; traces truncated",
            gum_core::optim::DIVERGENCE_LOSS
        )));
    }
    Ok(())
}

#[derive(Serialize)]
struct UnbiasedSummary {
    pass: bool,
    reports: Vec<UnbiasedReport>,
}

pub fn verify_unbiased_cmd(trials: usize, draws: usize, seed: u64, out: &mut dyn Write) -> Result<()> {
    if trials == 0 || draws < 2 {
        return Err(config_error("need at least one trial and two draws"));
    }
    let reports = parallel_map(&[false, true], worker_threads(), |&v| verify_unbiased(trials, draws, seed, v))?
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let summary = UnbiasedSummary {
        pass: reports.iter().all(|r| r.pass),
        reports,
    };
    serde_json::to_writer_pretty(&mut *out, &summary)?;
    writeln!(out)?;
    if !summary.pass {
        return Err(verification_error("unbiasedness check failed for at least one triple"));
    }
    Ok(())
}

/// Parses one `(m, n)` pair per line; separators may be whitespace, `,` or `x`. `#` starts a comment.
pub fn parse_shapes(text: &str) -> Result<Vec<(usize, usize)>> {
    let mut shapes = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line
            .split(|c: char| c.is_whitespace() || c == ',' || c == 'x' || c == 'X')
            .filter(|s| !s.is_empty())
            .collect();
        let bad = || config_error(format!("shapes line {}: expected two positive integers, got {raw:?}", i + 1));
        if parts.len() != 2 {
            return Err(bad());
        }
        let m: usize = parts[0].parse().map_err(|_| bad())?;
        let n: usize = parts[1].parse().map_err(|_| bad())?;
        if m == 0 || n == 0 {
            return Err(bad());
        }
        shapes.push((m, n));
    }
    if shapes.is_empty() {
        return Err(config_error("shapes file lists no blocks"));
    }
    Ok(shapes)
}

pub fn memory_report_cmd(
    shapes_path: &Path,
    rank: usize,
    rank_prime: usize,
    gamma: usize,
    q_override: Option<f64>,
    out: &mut dyn Write,
) -> Result<()> {
    let text = fs::read_to_string(shapes_path)
        .map_err(|e| config_error(format!("cannot read {}: {e}", shapes_path.display())))?;
    let shapes = parse_shapes(&text)?;
    if gamma > shapes.len() {
        return Err(config_error(format!("gamma {gamma} exceeds {} blocks", shapes.len())));
    }
    let q = q_override.unwrap_or(gamma as f64 / shapes.len() as f64);
    let report = model_memory(&shapes, rank, rank_prime, q).map_err(|e| config_error(e.to_string()))?;
    serde_json::to_writer_pretty(&mut *out, &report)?;
    writeln!(out)?;
    Ok(())
}

#[derive(Serialize)]
struct SpectrumOutput {
    step: usize,
    spectra: Vec<gum_core::metrics::SpectrumHistogram>,
    stable_rank: Vec<Option<f64>>,
    stable_rank_mean: Option<f64>,
    zero_blocks_skipped: bool,
}

pub fn analyze_spectrum_cmd(checkpoint: &Path, out_dir: Option<&Path>, out: &mut dyn Write) -> Result<()> {
    let ck = load_checkpoint(checkpoint)
        .map_err(|e| config_error(format!("checkpoint {}: {e}", checkpoint.display())))?;
    let step = ck.manifest.step;
    let blocks = &ck.snapshot.blocks;
    let spectra = blocks
        .iter()
        .enumerate()
        .map(|(i, b)| spectrum_snapshot(i, step, b))
        .collect::<gum_core::Result<Vec<_>>>()?;
    let sr = stable_rank_trace(blocks)?;
    let output = SpectrumOutput {
        step,
        spectra,
        stable_rank: sr.per_block.clone(),
        stable_rank_mean: sr.mean,
        zero_blocks_skipped: sr.zero_blocks_skipped,
    };
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        fs::write(dir.join("spectra.json"), serde_json::to_vec_pretty(&output.spectra)?)?;
        let mut csv = String::from("step,block,stable_rank\n");
        for (i, v) in sr.per_block.iter().enumerate() {
            csv.push_str(&format!("{step},{i},{}\n", v.map_or_else(String::new, |x| x.to_string())));
        }
        fs::write(dir.join("stable_rank.csv"), csv)?;
    }
    serde_json::to_writer_pretty(&mut *out, &output)?;
    writeln!(out)?;
    Ok(())
}

pub fn golden_check_cmd(config: &Path, reference: &Path, out: &mut dyn Write) -> Result<()> {
    let cfg = ExperimentConfig::load(config)?;
    let file = fs::File::open(reference)
        .map_err(|e| config_error(format!("cannot read {}: {e}", reference.display())))?;
    let expected = read_trace_csv(std::io::BufReader::new(file)).map_err(|e| config_error(e.to_string()))?;
    let (resolved, _) = resolve(&cfg)?;
    let actual = run(&resolved)?;
    match compare_traces(&expected, &actual.trace, GOLDEN_TOL) {
        None => {
            writeln!(out, "golden trace matches: {} rows", expected.len())?;
            Ok(())
        }
        Some(m) => Err(verification_error(format!("golden trace mismatch at {m}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes_parsing() {
        let s = parse_shapes("# model\n64 64\n32,128\n16x8  # tail\n\n").unwrap();
        assert_eq!(s, vec![(64, 64), (32, 128), (16, 8)]);
        assert!(parse_shapes("64\n").is_err());
        assert!(parse_shapes("0 4\n").is_err());
        assert!(parse_shapes("# nothing\n").is_err());
    }
}
