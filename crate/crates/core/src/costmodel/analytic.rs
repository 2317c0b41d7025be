//! Closed-form per-step transfer counts for each attention method.
//!
//! Every count is for one decoding step of one KV head: writing the new
//! key/value pair plus whatever the method reads to produce its output.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ledger::{Category, TransferLedger};
use crate::error::{CategoryDiff, Result, SparqError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Dense,
    Sparq,
    H2o,
    LmInfinite,
    Flexgen,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Dense,
        Method::Sparq,
        Method::H2o,
        Method::LmInfinite,
        Method::Flexgen,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Dense => "dense",
            Method::Sparq => "sparq",
            Method::H2o => "h2o",
            Method::LmInfinite => "lm-infinite",
            Method::Flexgen => "flexgen",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = SparqError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dense" => Ok(Method::Dense),
            "sparq" => Ok(Method::Sparq),
            "h2o" => Ok(Method::H2o),
            "lm-infinite" | "lm_inf" | "lm-inf" | "lminf" => Ok(Method::LmInfinite),
            "flexgen" => Ok(Method::Flexgen),
            other => Err(SparqError::InvalidConfig(format!("unknown method `{other}`"))),
        }
    }
}

/// Inputs to the closed forms. `rank` and `topk` are only needed by the
/// methods that use them; both are clamped (`rank` to `head_dim`, `topk` to
/// `seq_len`) the same way the implementations clamp them.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TransferParams {
    pub seq_len: u64,
    pub head_dim: u64,
    pub rank: Option<u64>,
    pub topk: Option<u64>,
    pub reallocate_mean: bool,
}

impl TransferParams {
    pub fn new(seq_len: u64, head_dim: u64) -> Self {
        TransferParams {
            seq_len,
            head_dim,
            rank: None,
            topk: None,
            reallocate_mean: true,
        }
    }

    pub fn rank(mut self, r: u64) -> Self {
        self.rank = Some(r);
        self
    }

    pub fn topk(mut self, k: u64) -> Self {
        self.topk = Some(k);
        self
    }

    pub fn reallocate_mean(mut self, on: bool) -> Self {
        self.reallocate_mean = on;
        self
    }
}

/// Closed-form transfers broken down by the same categories the ledger counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AnalyticTransfers {
    pub method: Method,
    pub expected: TransferLedger,
}

impl AnalyticTransfers {
    pub fn total(&self) -> u64 {
        self.expected.modeled_total()
    }
}

fn require(method: Method, param: &'static str, v: Option<u64>) -> Result<u64> {
    v.ok_or(SparqError::MissingParameter {
        method: method.name(),
        param,
    })
}

/// Per-category closed form for `method`.
pub fn analytic_breakdown(method: Method, p: &TransferParams) -> Result<AnalyticTransfers> {
    let (s, d) = (p.seq_len, p.head_dim);
    let mut e = TransferLedger::new();
    e.write(Category::KvAppend, 2 * d);
    match method {
        Method::Dense => {
            e.read(Category::KeyPositions, s * d);
            e.read(Category::Values, s * d);
        }
        Method::Sparq => {
            let r = require(method, "rank", p.rank)?.min(d);
            let k = require(method, "topk", p.topk)?.min(s);
            e.read(Category::KeyComponents, s * r);
            e.read(Category::KeyPositions, k * d);
            e.read(Category::Values, k * d);
            if p.reallocate_mean {
                e.read(Category::MeanVector, d);
                e.write(Category::MeanVector, d);
            }
        }
        Method::H2o => {
            let k = require(method, "topk", p.topk)?.min(s);
            e.read(Category::KeyPositions, k * d);
            e.read(Category::Values, k * d);
            e.read(Category::ScoreBookkeeping, s);
            e.write(Category::ScoreBookkeeping, s);
        }
        Method::LmInfinite => {
            let k = require(method, "topk", p.topk)?.min(s);
            e.read(Category::KeyPositions, k * d);
            e.read(Category::Values, k * d);
        }
        Method::Flexgen => {
            let k = require(method, "topk", p.topk)?.min(s);
            e.read(Category::KeyPositions, s * d);
            e.read(Category::Values, k * d);
        }
    }
    Ok(AnalyticTransfers {
        method,
        expected: e,
    })
}

/// Scalar elements transferred per step by `method`.
///
/// * dense: `2·S·d_h + 2·d_h`
/// * sparq: `S·r + 2·k·d_h + 4·d_h` (`2·d_h` in place of `4·d_h` without
///   mean reallocation)
/// * h2o: `2·k·d_h + 2·d_h + 2·S`
/// * lm-infinite: `2·k·d_h + 2·d_h`
/// * flexgen: `S·d_h + k·d_h + 2·d_h`
pub fn analytic_transfers(method: Method, p: &TransferParams) -> Result<u64> {
    analytic_breakdown(method, p).map(|a| a.total())
}

/// `M_method / M_dense`.
pub fn compression_ratio(method: Method, p: &TransferParams) -> Result<f64> {
    let m = analytic_transfers(method, p)? as f64;
    let dense = analytic_transfers(Method::Dense, p)? as f64;
    Ok(m / dense)
}

/// `M_dense / M_method`, the bandwidth-bound speedup upper limit.
pub fn theoretical_speedup(method: Method, p: &TransferParams) -> Result<f64> {
    compression_ratio(method, p).map(|c| 1.0 / c)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ReconcileRow {
    pub category: Category,
    pub counted: u64,
    pub expected: u64,
}

/// Outcome of a successful [`reconcile`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ReconcileReport {
    pub method: Method,
    pub total: u64,
    /// Dual-layout key writes, counted but outside the closed form.
    pub excluded_elements: u64,
    pub rows: Vec<ReconcileRow>,
}

/// Checks a counted ledger against the closed form, category by category.
pub fn reconcile(ledger: &TransferLedger, analytic: &AnalyticTransfers) -> Result<ReconcileReport> {
    let mut rows = Vec::new();
    let mut diffs = Vec::new();
    for category in Category::ALL.into_iter().filter(|c| c.is_modeled()) {
        let counted = ledger.in_category(category);
        let expected = analytic.expected.in_category(category);
        if counted != expected {
            diffs.push(CategoryDiff {
                category,
                counted,
                expected,
            });
        }
        rows.push(ReconcileRow {
            category,
            counted,
            expected,
        });
    }
    if !diffs.is_empty() || ledger.modeled_total() != analytic.total() {
        return Err(SparqError::LedgerDivergence {
            counted: ledger.modeled_total(),
            expected: analytic.total(),
            diffs,
        });
    }
    Ok(ReconcileReport {
        method: analytic.method,
        total: ledger.modeled_total(),
        excluded_elements: ledger.in_category(Category::DualLayoutKey),
        rows,
    })
}
