//! Run diagnostics: projection residual, spectra, stable rank, trace CSVs.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{stable_rank, svd_thin, Matrix};
use crate::optim::BlockState;

pub const CSV_HEADER: [&str; 7] = [
    "step",
    "loss",
    "grad_trace_norm",
    "chi_residual",
    "stable_rank_mean",
    "memory_scalars",
    "assignment_bits",
];

/// Per-field tolerance used by golden comparisons.
pub const GOLDEN_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    /// Number of updates applied so far.
    pub step: usize,
    pub loss: f64,
    /// Sum over blocks of the trace norm of the true gradient.
    pub grad_trace_norm: f64,
    pub chi_residual: Option<f64>,
    /// Per-block stable ranks; zero blocks are left out.
    pub stable_ranks: Vec<f64>,
    pub stable_rank_mean: Option<f64>,
    /// Set when some block had zero weights and was left out of the mean.
    pub zero_blocks_skipped: bool,
    pub memory_scalars: usize,
    /// One '0'/'1' per block for low-rank/full-rank.
    pub assignment_bits: String,
}

/// `‖g_u − g_p‖_F / ‖g_u‖_F`.
pub fn chi_residual(g_unprojected: &Matrix, g_projected: &Matrix) -> Result<f64> {
    if g_unprojected.shape() != g_projected.shape() {
        return Err(Error::input(format!(
            "shape mismatch {:?} vs {:?}",
            g_unprojected.shape(),
            g_projected.shape()
        )));
    }
    let denom = g_unprojected.frobenius_norm();
    if denom == 0.0 {
        return Err(Error::input("zero unprojected gradient"));
    }
    Ok(g_unprojected.sub(g_projected).frobenius_norm() / denom)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumHistogram {
    pub block: usize,
    pub step: usize,
    /// Descending.
    pub singular_values: Vec<f64>,
}

pub fn spectrum_snapshot(block: usize, step: usize, state: &BlockState) -> Result<SpectrumHistogram> {
    let svd = svd_thin(state.oriented_weights())?;
    Ok(SpectrumHistogram {
        block,
        step,
        singular_values: svd.s,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StableRankSummary {
    /// `None` for zero blocks.
    pub per_block: Vec<Option<f64>>,
    pub mean: Option<f64>,
    pub zero_blocks_skipped: bool,
}

/// Per-block stable rank of the weights and their arithmetic mean.
pub fn stable_rank_trace(states: &[BlockState]) -> Result<StableRankSummary> {
    let mut per_block = Vec::with_capacity(states.len());
    for s in states {
        let w = s.oriented_weights();
        per_block.push(if w.is_zero() { None } else { Some(stable_rank(w)?) });
    }
    let present: Vec<f64> = per_block.iter().flatten().copied().collect();
    let mean = (!present.is_empty()).then(|| present.iter().sum::<f64>() / present.len() as f64);
    Ok(StableRankSummary {
        zero_blocks_skipped: present.len() < per_block.len(),
        per_block,
        mean,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradNormSummary {
    pub steps: Vec<usize>,
    /// Running minimum of `grad_trace_norm`.
    pub min_so_far: Vec<f64>,
    pub final_value: f64,
}

pub fn grad_norm_trace(trace: &[TraceRecord]) -> Result<GradNormSummary> {
    let last = trace.last().ok_or_else(|| Error::input("empty trace"))?;
    let mut best = f64::INFINITY;
    let min_so_far = trace
        .iter()
        .map(|r| {
            best = best.min(r.grad_trace_norm);
            best
        })
        .collect();
    Ok(GradNormSummary {
        steps: trace.iter().map(|r| r.step).collect(),
        min_so_far,
        final_value: last.grad_trace_norm,
    })
}

/// Running-minimum value at the last record with `step <= at`.
pub fn running_min_at(trace: &[TraceRecord], at: usize) -> Option<f64> {
    trace
        .iter()
        .take_while(|r| r.step <= at)
        .map(|r| r.grad_trace_norm)
        .reduce(f64::min)
}

fn opt_field(x: Option<f64>) -> String {
    x.map_or_else(String::new, |v| v.to_string())
}

pub fn write_trace_csv<W: Write>(trace: &[TraceRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in trace {
        w.write_record([
            r.step.to_string(),
            r.loss.to_string(),
            r.grad_trace_norm.to_string(),
            opt_field(r.chi_residual),
            opt_field(r.stable_rank_mean),
            r.memory_scalars.to_string(),
            r.assignment_bits.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a trace CSV; per-block stable ranks are not stored and come back empty.
pub fn read_trace_csv<R: Read>(input: R) -> Result<Vec<TraceRecord>> {
    let mut rdr = csv::Reader::from_reader(input);
    let header = rdr.headers()?.clone();
    if header.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(Error::Format(format!("unexpected trace header {:?}", header)));
    }
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let num = |j: usize| -> Result<f64> {
            row[j]
                .parse::<f64>()
                .map_err(|e| Error::Format(format!("row {i}, column {}: {e}", CSV_HEADER[j])))
        };
        let opt = |j: usize| -> Result<Option<f64>> {
            if row[j].is_empty() {
                Ok(None)
            } else {
                num(j).map(Some)
            }
        };
        let int = |j: usize| -> Result<usize> {
            row[j]
                .parse::<usize>()
                .map_err(|e| Error::Format(format!("row {i}, column {}: {e}", CSV_HEADER[j])))
        };
        out.push(TraceRecord {
            step: int(0)?,
            loss: num(1)?,
            grad_trace_norm: num(2)?,
            chi_residual: opt(3)?,
            stable_ranks: Vec::new(),
            stable_rank_mean: opt(4)?,
            zero_blocks_skipped: false,
            memory_scalars: int(5)?,
            assignment_bits: row[6].to_string(),
        });
    }
    Ok(out)
}

/// First divergence between two traces, if any.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceMismatch {
    /// Zero-based data row.
    pub row: usize,
    pub field: &'static str,
    pub expected: String,
    pub actual: String,
}

impl std::fmt::Display for TraceMismatch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "row {} field {}: expected {}, got {}",
            self.row, self.field, self.expected, self.actual
        )
    }
}

/// Field-wise comparison with absolute tolerance `tol` on reals; integers
/// and assignment bits must match exactly.
pub fn compare_traces(expected: &[TraceRecord], actual: &[TraceRecord], tol: f64) -> Option<TraceMismatch> {
    let close = |a: f64, b: f64| a == b || (a - b).abs() <= tol;
    let opt_close = |a: Option<f64>, b: Option<f64>| match (a, b) {
        (None, None) => true,
        (Some(a), Some(b)) => close(a, b),
        _ => false,
    };
    let mismatch = |row, field, e: String, a: String| {
        Some(TraceMismatch {
            row,
            field,
            expected: e,
            actual: a,
        })
    };
    for (i, (e, a)) in expected.iter().zip(actual).enumerate() {
        if e.step != a.step {
            return mismatch(i, "step", e.step.to_string(), a.step.to_string());
        }
        if !close(e.loss, a.loss) {
            return mismatch(i, "loss", e.loss.to_string(), a.loss.to_string());
        }
        if !close(e.grad_trace_norm, a.grad_trace_norm) {
            return mismatch(i, "grad_trace_norm", e.grad_trace_norm.to_string(), a.grad_trace_norm.to_string());
        }
        if !opt_close(e.chi_residual, a.chi_residual) {
            return mismatch(i, "chi_residual", opt_field(e.chi_residual), opt_field(a.chi_residual));
        }
        if !opt_close(e.stable_rank_mean, a.stable_rank_mean) {
            return mismatch(i, "stable_rank_mean", opt_field(e.stable_rank_mean), opt_field(a.stable_rank_mean));
        }
        if e.memory_scalars != a.memory_scalars {
            return mismatch(i, "memory_scalars", e.memory_scalars.to_string(), a.memory_scalars.to_string());
        }
        if e.assignment_bits != a.assignment_bits {
            return mismatch(i, "assignment_bits", e.assignment_bits.clone(), a.assignment_bits.clone());
        }
    }
    if expected.len() != actual.len() {
        let row = expected.len().min(actual.len());
        return mismatch(row, "length", expected.len().to_string(), actual.len().to_string());
    }
    None
}
