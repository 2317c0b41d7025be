//! Running the attention methods over a captured trace.

use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::costmodel::Method;
use crate::error::Result;
use crate::harness::report::{opt, render_table, to_csv, to_json, Format};
use crate::harness::step::{decode_step, MethodParams};
use crate::harness::sweep::{aggregate, cell_local, RowKey, SweepRow, SWEEP_COLUMNS};
use crate::harness::synth::Workload;
use crate::harness::trace::TraceFile;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceEvalReport {
    /// Hex SHA-256 of the trace file bytes.
    pub source_hash: String,
    pub rows: Vec<SweepRow>,
}

/// One row per method, each from a single accounted decode step over the
/// workload. The last cache position is the token being decoded.
pub fn eval_workload(workload: &Workload, methods: &[Method], params: &MethodParams) -> Result<Vec<SweepRow>> {
    let (s, d, g) = (workload.cache.len(), workload.cache.head_dim(), workload.queries.len());
    let mut methods = methods.to_vec();
    methods.sort();
    methods.dedup();
    methods
        .into_iter()
        .map(|method| {
            let outcome = decode_step(method, params, workload)?;
            let rank = (method == Method::Sparq).then_some(params.rank);
            let topk = (method != Method::Dense).then_some(params.topk);
            let key = RowKey {
                method,
                seq_len: s,
                head_dim: d,
                gqa: g,
                rank,
                topk,
                local: cell_local(params.local, method, topk, s),
            };
            aggregate(key, params, std::slice::from_ref(&outcome))
        })
        .collect()
}

pub fn trace_eval(path: impl AsRef<Path>, methods: &[Method], params: &MethodParams) -> Result<TraceEvalReport> {
    let bytes = std::fs::read(path)?;
    let trace = TraceFile::from_bytes(&bytes)?;
    let workload = trace.to_workload()?;
    Ok(TraceEvalReport {
        source_hash: hex::encode(Sha256::digest(&bytes)),
        rows: eval_workload(&workload, methods, params)?,
    })
}

impl TraceEvalReport {
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
                let mut out = format!("source_hash {}\n", self.source_hash);
                out.push_str(&render_table(&SWEEP_COLUMNS, &rows));
                Ok(out)
            }
        }
    }
}
