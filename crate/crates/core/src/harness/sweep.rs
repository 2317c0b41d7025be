//! Parameter sweeps over synthetic workloads.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::costmodel::{compression_ratio, Method, TransferParams};
use crate::error::{Result, SparqError};
use crate::harness::report::{content_hash, opt, render_table, to_csv, to_json, Format};
use crate::harness::step::{decode_step, uses_mean_reallocation, LocalRule, MethodParams, StepOutcome};
use crate::harness::synth::{synth_workload, Tail, Workload};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub methods: Vec<Method>,
    pub seq_lens: Vec<usize>,
    pub head_dim: usize,
    pub gqa: usize,
    pub ranks: Vec<usize>,
    pub topks: Vec<usize>,
    pub local: LocalRule,
    pub trials: usize,
    pub seed: u64,
    pub tail: Tail,
    pub reallocate_mean: Option<bool>,
    pub flexgen_renormalize: bool,
}

impl Default for SweepSpec {
    /// Rank grid {8, 16, 32, 64}, `k = 128`, `l = k/4`.
    fn default() -> Self {
        SweepSpec {
            methods: vec![Method::Dense, Method::Sparq, Method::H2o, Method::LmInfinite, Method::Flexgen],
            seq_lens: vec![1024],
            head_dim: 128,
            gqa: 1,
            ranks: vec![8, 16, 32, 64],
            topks: vec![128],
            local: LocalRule::QuarterOfTopk,
            trials: 4,
            seed: 0,
            tail: Tail::Heavy,
            reallocate_mean: None,
            flexgen_renormalize: false,
        }
    }
}

/// One report row. Field order is the CSV column order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub method: Method,
    pub seq_len: usize,
    pub head_dim: usize,
    pub gqa: usize,
    pub rank: Option<usize>,
    pub topk: Option<usize>,
    pub local: Option<usize>,
    /// `M_method / M_dense`.
    pub compression_ratio: f64,
    /// `M_dense / M_method`.
    pub theoretical_speedup: f64,
    pub mean_topk_agreement: f64,
    pub output_rel_error_vs_dense: f64,
}

pub const SWEEP_COLUMNS: [&str; 11] = [
    "method",
    "seq_len",
    "head_dim",
    "gqa",
    "rank",
    "topk",
    "local",
    "compression_ratio",
    "theoretical_speedup",
    "mean_topk_agreement",
    "output_rel_error_vs_dense",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub spec_hash: String,
    pub spec: SweepSpec,
    pub rows: Vec<SweepRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct Cell {
    method: Method,
    seq_len: usize,
    rank: Option<usize>,
    topk: Option<usize>,
}

impl std::fmt::Display for Cell {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} S={} r={} k={}", self.method, self.seq_len, opt(self.rank), opt(self.topk))
    }
}

/// splitmix64 finaliser, used to derive per-trial seeds.
pub fn mix_seed(base: u64, a: u64, b: u64) -> u64 {
    let mut z = base
        .wrapping_add(a.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(b.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(SparqError::InvalidConfig(m.into()));
        if self.methods.is_empty() || self.seq_lens.is_empty() {
            return bad("methods and seq_lens must be non-empty");
        }
        let needs_k = self.methods.iter().any(|&m| m != Method::Dense);
        if needs_k && self.topks.is_empty() {
            return bad("topk grid must be non-empty");
        }
        if self.methods.contains(&Method::Sparq) && self.ranks.is_empty() {
            return bad("rank grid must be non-empty for sparq");
        }
        if self.trials == 0 || self.head_dim == 0 || self.gqa == 0 {
            return bad("trials, head_dim and gqa must be positive");
        }
        if self.seq_lens.contains(&0) || self.ranks.contains(&0) || self.topks.contains(&0) {
            return bad("grid values must be positive");
        }
        if self.gqa > 1 {
            if let Some(m) = self.methods.iter().find(|m| !matches!(m, Method::Dense | Method::Sparq)) {
                return Err(SparqError::InvalidConfig(format!(
                    "{m} does not support grouped queries (gqa={})",
                    self.gqa
                )));
            }
        }
        Ok(())
    }

    fn cells(&self) -> Vec<Cell> {
        let mut cells = Vec::new();
        for &method in &self.methods {
            for &seq_len in &self.seq_lens {
                match method {
                    Method::Dense => cells.push(Cell { method, seq_len, rank: None, topk: None }),
                    Method::Sparq => {
                        for &r in &self.ranks {
                            for &k in &self.topks {
                                cells.push(Cell { method, seq_len, rank: Some(r), topk: Some(k) });
                            }
                        }
                    }
                    _ => {
                        for &k in &self.topks {
                            cells.push(Cell { method, seq_len, rank: None, topk: Some(k) });
                        }
                    }
                }
            }
        }
        cells.sort();
        cells.dedup();
        cells
    }

    fn params_for(&self, cell: &Cell) -> MethodParams {
        let topk = cell.topk.unwrap_or(cell.seq_len);
        let mut p = MethodParams::new(cell.rank.unwrap_or(self.head_dim), topk)
            .local(self.local)
            .reallocate_mean(self.reallocate_mean);
        p.flexgen_renormalize = self.flexgen_renormalize;
        p
    }

    /// The workload for trial `t` at `seq_len`; shared by every method and
    /// parameter setting so rows are directly comparable.
    pub fn workload(&self, seq_len: usize, trial: usize) -> Result<Workload> {
        synth_workload(
            seq_len,
            self.head_dim,
            self.gqa,
            self.tail,
            mix_seed(self.seed, seq_len as u64, trial as u64),
        )
    }
}

/// Identifies a report row.
#[derive(Debug, Clone, Copy)]
pub(crate) struct RowKey {
    pub method: Method,
    pub seq_len: usize,
    pub head_dim: usize,
    pub gqa: usize,
    pub rank: Option<usize>,
    pub topk: Option<usize>,
    pub local: Option<usize>,
}

pub(crate) fn aggregate(key: RowKey, params: &MethodParams, outcomes: &[StepOutcome]) -> Result<SweepRow> {
    let realloc = uses_mean_reallocation(key.method, params, key.gqa);
    let mut tp = TransferParams::new(key.seq_len as u64, key.head_dim as u64).reallocate_mean(realloc);
    if let Some(r) = key.rank {
        tp = tp.rank(r as u64);
    }
    if let Some(k) = key.topk {
        tp = tp.topk(k as u64);
    }
    let ratio = compression_ratio(key.method, &tp)?;
    let n = outcomes.len() as f64;
    Ok(SweepRow {
        method: key.method,
        seq_len: key.seq_len,
        head_dim: key.head_dim,
        gqa: key.gqa,
        rank: key.rank,
        topk: key.topk,
        local: key.local,
        compression_ratio: ratio,
        theoretical_speedup: 1.0 / ratio,
        mean_topk_agreement: outcomes.iter().map(|o| o.agreement).sum::<f64>() / n,
        output_rel_error_vs_dense: outcomes.iter().map(|o| o.rel_error).sum::<f64>() / n,
    })
}

pub(crate) fn cell_local(spec_local: LocalRule, method: Method, topk: Option<usize>, seq_len: usize) -> Option<usize> {
    match method {
        Method::Sparq | Method::H2o => topk.map(|k| spec_local.resolve(k).min(seq_len)),
        Method::LmInfinite => topk.map(|k| k.min(seq_len).saturating_sub(16)),
        _ => None,
    }
}

fn run_cell(spec: &SweepSpec, cell: &Cell) -> Result<SweepRow> {
    let params = spec.params_for(cell);
    if let Some(k) = cell.topk {
        if k > cell.seq_len {
            log::warn!("{cell}: topk {k} exceeds sequence length; clamping to {}", cell.seq_len);
        }
    }
    if let Some(r) = cell.rank {
        if r > spec.head_dim {
            log::warn!("{cell}: rank {r} exceeds head_dim; clamping to {}", spec.head_dim);
        }
    }
    let outcomes = (0..spec.trials)
        .map(|t| {
            let w = spec.workload(cell.seq_len, t)?;
            decode_step(cell.method, &params, &w)
        })
        .collect::<Result<Vec<_>>>()?;
    let key = RowKey {
        method: cell.method,
        seq_len: cell.seq_len,
        head_dim: spec.head_dim,
        gqa: spec.gqa,
        rank: cell.rank,
        topk: cell.topk,
        local: cell_local(spec.local, cell.method, cell.topk, cell.seq_len),
    };
    aggregate(key, &params, &outcomes)
}

/// Runs every cell of the sweep. Cells run in parallel; rows come back
/// sorted by (method, S, r, k). Each step is reconciled against the closed
/// form, and the first failing cell in row order aborts the sweep.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepReport> {
    spec.validate()?;
    let cells = spec.cells();
    let results: Vec<Result<SweepRow>> = cells.par_iter().map(|c| run_cell(spec, c)).collect();
    let mut rows = Vec::with_capacity(results.len());
    for (cell, r) in cells.iter().zip(results) {
        rows.push(r.map_err(|e| SparqError::SweepCell {
            cell: cell.to_string(),
            source: Box::new(e),
        })?);
    }
    Ok(SweepReport {
        spec_hash: content_hash(spec)?,
        spec: spec.clone(),
        rows,
    })
}

impl SweepReport {
    pub fn render(&self, format: Format) -> Result<String> {
        match format {
            Format::Csv => to_csv(&self.rows),
            Format::Json => to_json(self),
            Format::Table => {
                let rows: Vec<Vec<String>> = self
                    .rows
                    .iter()
                    .map(|r| {
                        vec![
                            r.method.to_string(),
                            r.seq_len.to_string(),
                            r.head_dim.to_string(),
                            r.gqa.to_string(),
                            opt(r.rank),
                            opt(r.topk),
                            opt(r.local),
                            format!("{:.4}", r.compression_ratio),
                            format!("{:.3}", r.theoretical_speedup),
                            format!("{:.4}", r.mean_topk_agreement),
                            format!("{:.3e}", r.output_rel_error_vs_dense),
                        ]
                    })
                    .collect();
                let mut out = format!("spec_hash {}\n", self.spec_hash);
                out.push_str(&render_table(&SWEEP_COLUMNS, &rows));
                Ok(out)
            }
        }
    }
}
