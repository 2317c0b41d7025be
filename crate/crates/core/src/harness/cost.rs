//! Analytic-only cost tables: per-method transfers and the roofline view.

use serde::{Deserialize, Serialize};

use crate::costmodel::{
    analytic_transfers, attention_transfer_fraction, bandwidth_bound, compression_ratio, max_intensity,
    reference_shapes, HardwareSpec, Method, ModelShape, TransferParams,
};
use crate::error::{Result, SparqError};
use crate::harness::report::{content_hash, opt, render_table, to_csv, to_json, Format};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostSpec {
    pub methods: Vec<Method>,
    pub seq_lens: Vec<usize>,
    pub head_dim: usize,
    pub rank: usize,
    pub topk: usize,
    pub reallocate_mean: bool,
}

impl Default for CostSpec {
    fn default() -> Self {
        CostSpec {
            methods: Method::ALL.to_vec(),
            seq_lens: vec![4096, 16384],
            head_dim: 128,
            rank: 32,
            topk: 128,
            reallocate_mean: true,
        }
    }
}

/// Field order is the CSV column order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostRow {
    pub method: Method,
    pub seq_len: usize,
    pub head_dim: usize,
    pub rank: Option<usize>,
    pub topk: Option<usize>,
    pub transfers: u64,
    pub compression_ratio: f64,
    pub theoretical_speedup: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RooflineRow {
    pub model: String,
    pub gqa: u64,
    pub d_model: u64,
    pub seq_len: u64,
    pub rho: f64,
    pub max_intensity: f64,
    /// Attention share of transfers at batch 1.
    pub attention_fraction_b1: f64,
    /// Hardware presets for which the batch-limit intensity is below balance.
    pub bandwidth_bound_on: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HardwareRow {
    pub name: String,
    pub r_a: f64,
    pub r_m: f64,
    pub machine_balance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostReport {
    pub spec_hash: String,
    pub spec: CostSpec,
    pub rows: Vec<CostRow>,
    pub roofline: Vec<RooflineRow>,
    pub hardware: Vec<HardwareRow>,
}

pub fn run_cost(spec: &CostSpec) -> Result<CostReport> {
    if spec.methods.is_empty() || spec.seq_lens.is_empty() {
        return Err(SparqError::InvalidConfig("methods and seq_lens must be non-empty".into()));
    }
    if spec.head_dim == 0 || spec.rank == 0 || spec.topk == 0 || spec.seq_lens.contains(&0) {
        return Err(SparqError::InvalidConfig("cost parameters must be positive".into()));
    }
    let mut methods = spec.methods.clone();
    methods.sort();
    methods.dedup();
    let mut seq_lens = spec.seq_lens.clone();
    seq_lens.sort();
    seq_lens.dedup();

    let mut rows = Vec::new();
    for &method in &methods {
        for &s in &seq_lens {
            let mut p = TransferParams::new(s as u64, spec.head_dim as u64)
                .reallocate_mean(method == Method::Sparq && spec.reallocate_mean);
            let (rank, topk) = match method {
                Method::Dense => (None, None),
                Method::Sparq => (Some(spec.rank), Some(spec.topk)),
                _ => (None, Some(spec.topk)),
            };
            if let Some(r) = rank {
                p = p.rank(r as u64);
            }
            if let Some(k) = topk {
                p = p.topk(k as u64);
            }
            let ratio = compression_ratio(method, &p)?;
            rows.push(CostRow {
                method,
                seq_len: s,
                head_dim: spec.head_dim,
                rank,
                topk,
                transfers: analytic_transfers(method, &p)?,
                compression_ratio: ratio,
                theoretical_speedup: 1.0 / ratio,
            });
        }
    }

    let presets = HardwareSpec::presets();
    let mut roofline = Vec::new();
    for (name, g, d_m, s) in reference_shapes() {
        let shape = ModelShape::new(d_m, s, 1, g)?;
        let limit = shape.with_batch(1e12);
        roofline.push(RooflineRow {
            model: name.to_string(),
            gqa: g,
            d_model: d_m,
            seq_len: s,
            rho: shape.rho(),
            max_intensity: max_intensity(&shape),
            attention_fraction_b1: attention_transfer_fraction(&shape),
            bandwidth_bound_on: presets
                .iter()
                .filter(|hw| bandwidth_bound(&limit, hw).is_bandwidth_bound)
                .map(|hw| hw.name.clone())
                .collect(),
        });
    }
    let hardware = presets
        .iter()
        .map(|hw| HardwareRow {
            name: hw.name.clone(),
            r_a: hw.r_a,
            r_m: hw.r_m,
            machine_balance: hw.machine_balance(),
        })
        .collect();

    Ok(CostReport {
        spec_hash: content_hash(spec)?,
        spec: spec.clone(),
        rows,
        roofline,
        hardware,
    })
}

impl CostReport {
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
                            opt(r.rank),
                            opt(r.topk),
                            r.transfers.to_string(),
                            format!("{:.4}", r.compression_ratio),
                            format!("{:.3}", r.theoretical_speedup),
                        ]
                    })
                    .collect();
                let mut out = format!("spec_hash {}\n", self.spec_hash);
                out.push_str(&render_table(
                    &["method", "seq_len", "head_dim", "rank", "topk", "transfers", "compression_ratio", "theoretical_speedup"],
                    &rows,
                ));
                out.push('\n');
                let rows: Vec<Vec<String>> = self
                    .roofline
                    .iter()
                    .map(|r| {
                        vec![
                            r.model.clone(),
                            r.gqa.to_string(),
                            r.d_model.to_string(),
                            r.seq_len.to_string(),
                            format!("{}", r.rho),
                            format!("{}", r.max_intensity),
                            format!("{:.4}", r.attention_fraction_b1),
                            r.bandwidth_bound_on.join(","),
                        ]
                    })
                    .collect();
                out.push_str(&render_table(
                    &["model", "g", "d_m", "S", "rho", "max_A/M", "attn_fraction_B1", "bandwidth_bound_on"],
                    &rows,
                ));
                out.push('\n');
                let rows: Vec<Vec<String>> = self
                    .hardware
                    .iter()
                    .map(|h| {
                        vec![
                            h.name.clone(),
                            format!("{:e}", h.r_a),
                            format!("{:e}", h.r_m),
                            format!("{:.1}", h.machine_balance),
                        ]
                    })
                    .collect();
                out.push_str(&render_table(&["hardware", "r_A", "r_M", "r_A/r_M"], &rows));
                Ok(out)
            }
        }
    }
}
