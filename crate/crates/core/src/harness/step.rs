//! One accounted decoding step for any method: append the newest key/value
//! pair, attend, and reconcile the counted transfers with the closed form.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::attention::{dense_attention_group, dense_scores, sparq_attention_gqa, AttentionHeadConfig};
use crate::baselines::{flexgen_attention, h2o_attention, lm_infinite_attention, H2oState};
use crate::costmodel::{analytic_breakdown, reconcile, Method, ReconcileReport, TransferLedger, TransferParams};
use crate::error::{Result, SparqError};
use crate::harness::metrics::{overlap, rel_l2_error, topk_agreement};
use crate::harness::synth::Workload;
use crate::kvcache::KvCacheHead;
use crate::numkernel::argtopk;

/// Local window length, fixed or derived from the budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LocalRule {
    Fixed(usize),
    QuarterOfTopk,
}

impl LocalRule {
    pub fn resolve(self, topk: usize) -> usize {
        match self {
            LocalRule::Fixed(l) => l.min(topk),
            LocalRule::QuarterOfTopk => topk / 4,
        }
    }
}

impl fmt::Display for LocalRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LocalRule::Fixed(l) => write!(f, "{l}"),
            LocalRule::QuarterOfTopk => f.write_str("k/4"),
        }
    }
}

impl FromStr for LocalRule {
    type Err = SparqError;

    fn from_str(s: &str) -> Result<Self> {
        if s == "k/4" {
            return Ok(LocalRule::QuarterOfTopk);
        }
        s.parse()
            .map(LocalRule::Fixed)
            .map_err(|_| SparqError::InvalidConfig(format!("local window `{s}` is neither a count nor k/4")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MethodParams {
    pub rank: usize,
    pub topk: usize,
    pub local: LocalRule,
    /// `None` follows the group-size default (on for one query, off otherwise).
    pub reallocate_mean: Option<bool>,
    pub flexgen_renormalize: bool,
}

impl MethodParams {
    pub fn new(rank: usize, topk: usize) -> Self {
        MethodParams {
            rank,
            topk,
            local: LocalRule::QuarterOfTopk,
            reallocate_mean: None,
            flexgen_renormalize: false,
        }
    }

    pub fn local(mut self, rule: LocalRule) -> Self {
        self.local = rule;
        self
    }

    pub fn reallocate_mean(mut self, on: Option<bool>) -> Self {
        self.reallocate_mean = on;
        self
    }
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub outputs: Vec<Vec<f64>>,
    pub ledger: TransferLedger,
    pub reconcile: ReconcileReport,
    /// Mean over queries of the relative L2 error against dense attention.
    pub rel_error: f64,
    /// Mean over queries of top-k agreement with the dense scores.
    pub agreement: f64,
}

fn sparq_config(params: &MethodParams, head_dim: usize, gqa: usize) -> Result<AttentionHeadConfig> {
    let local = params.local.resolve(params.topk);
    let mut cfg = AttentionHeadConfig::new(head_dim, gqa, params.rank, params.topk, local)?;
    if let Some(on) = params.reallocate_mean {
        cfg = cfg.with_reallocate_mean(on);
    }
    Ok(cfg)
}

fn transfer_params(method: Method, params: &MethodParams, seq_len: usize, head_dim: usize, realloc: bool) -> TransferParams {
    let mut p = TransferParams::new(seq_len as u64, head_dim as u64).reallocate_mean(realloc);
    match method {
        Method::Dense => {}
        Method::Sparq => p = p.rank(params.rank as u64).topk(params.topk as u64),
        _ => p = p.topk(params.topk as u64),
    }
    p
}

/// Whether `method` at this group size charges the mean-vector update.
pub fn uses_mean_reallocation(method: Method, params: &MethodParams, gqa: usize) -> bool {
    method == Method::Sparq && params.reallocate_mean.unwrap_or(gqa == 1)
}

/// Runs one step of `method` on `workload`, treating the cache's last
/// position as the token being decoded.
///
/// The first `S − 1` positions are loaded without accounting; the last is
/// appended through [`KvCacheHead::append`] so its write is counted. H2O is
/// first driven through every earlier position, using each position's key
/// as the query issued at that step.
pub fn decode_step(method: Method, params: &MethodParams, workload: &Workload) -> Result<StepOutcome> {
    let full = &workload.cache;
    let queries = &workload.queries;
    let (s, d, g) = (full.len(), full.head_dim(), queries.len());
    if s == 0 {
        return Err(SparqError::EmptyCache);
    }
    if g == 0 {
        return Err(SparqError::InvalidConfig("no queries".into()));
    }
    if g > 1 && !matches!(method, Method::Dense | Method::Sparq) {
        return Err(SparqError::InvalidConfig(format!(
            "{method} is single-query; grouped queries are supported by dense and sparq only"
        )));
    }

    let realloc = uses_mean_reallocation(method, params, g);
    let mut ledger = TransferLedger::new();
    let mut cache = KvCacheHead::new(d)?.with_layout(full.layout());
    for p in 0..s - 1 {
        cache.push(full.key(p), full.value(p))?;
    }
    cache.append(full.key(s - 1), full.value(s - 1), &mut ledger, realloc)?;

    let truth = queries
        .iter()
        .map(|q| dense_scores(q, &cache))
        .collect::<Result<Vec<_>>>()?;
    let k_eff = params.topk.min(s).max(1);
    let set_agreement = |positions: &[usize], truth: &[f64]| -> f64 {
        overlap(positions, &argtopk(truth, k_eff)) as f64 / k_eff as f64
    };

    let (outputs, agreements): (Vec<Vec<f64>>, Vec<f64>) = match method {
        Method::Dense => {
            let outs = dense_attention_group(queries, &cache)?;
            outs.into_iter()
                .map(|o| {
                    ledger += o.ledger_delta;
                    (o.y.into_inner(), 1.0)
                })
                .unzip()
        }
        Method::Sparq => {
            let cfg = sparq_config(params, d, g)?;
            let group = sparq_attention_gqa(queries, &cache, &cfg)?;
            ledger += group.ledger;
            let mut outs = Vec::with_capacity(g);
            let mut agree = Vec::with_capacity(g);
            for (h, t) in group.heads.into_iter().zip(&truth) {
                agree.push(topk_agreement(t, &h.approx.s_hat, k_eff)?);
                outs.push(h.y.into_inner());
            }
            (outs, agree)
        }
        Method::H2o => {
            let mut state = H2oState::new(params.topk, params.local.resolve(params.topk))?;
            let history: Vec<&[f64]> = (0..s).map(|p| full.key(p)).collect();
            state.warm_up(&cache, &history)?;
            let o = h2o_attention(&queries[0], &mut state, &cache)?;
            ledger += o.ledger_delta;
            let a = set_agreement(&o.positions, &truth[0]);
            (vec![o.y.into_inner()], vec![a])
        }
        Method::LmInfinite => {
            let o = lm_infinite_attention(&queries[0], &cache, params.topk)?;
            ledger += o.ledger_delta;
            let a = set_agreement(&o.positions, &truth[0]);
            (vec![o.y.into_inner()], vec![a])
        }
        Method::Flexgen => {
            let o = flexgen_attention(&queries[0], &cache, params.topk, params.flexgen_renormalize)?;
            ledger += o.ledger_delta;
            let a = set_agreement(&o.positions, &truth[0]);
            (vec![o.y.into_inner()], vec![a])
        }
    };

    let analytic = analytic_breakdown(method, &transfer_params(method, params, s, d, realloc))?;
    let report = reconcile(&ledger, &analytic)?;

    let mut rel_error = 0.0;
    for (q, y) in queries.iter().zip(&outputs) {
        let dense = dense_attention_group(std::slice::from_ref(q), &cache)?;
        rel_error += rel_l2_error(y, &dense[0].y);
    }
    let n = outputs.len() as f64;
    Ok(StepOutcome {
        rel_error: rel_error / n,
        agreement: agreements.iter().sum::<f64>() / n,
        outputs,
        ledger,
        reconcile: report,
    })
}
