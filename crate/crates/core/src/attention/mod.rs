//! Dense reference attention and SparQ attention for one KV head.

mod config;
mod dense;
pub mod reference;
mod sparq;

pub use config::AttentionHeadConfig;
pub use dense::{dense_attention, dense_attention_group, dense_scores};
pub use sparq::{
    select_positions, sparq_attention, sparq_attention_gqa, sparq_step1, sparq_step2, sparq_step3,
};

use crate::costmodel::TransferLedger;
use crate::error::{Result, SparqError};
use crate::kvcache::KvCacheHead;
use crate::numkernel::{axpy, dot, IndexList, Vector};
use crate::scalar::Scalar;

/// Output of an attention call over an explicit set of positions.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionOutput<T> {
    pub y: Vector<T>,
    /// Positions whose keys and values contributed to `y`.
    pub positions: IndexList,
    /// Softmax weights aligned with `positions`.
    pub weights: Vector<T>,
    pub ledger_delta: TransferLedger,
}

/// Step 1 result: selected query components, temperature and approximate
/// scores over every position.
#[derive(Debug, Clone, PartialEq)]
pub struct ApproxScores<T> {
    pub i1: IndexList,
    pub tau: T,
    pub s_hat: Vector<T>,
}

/// Step 2 result: selected positions, their exact scores and the approximate
/// mass they cover.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSelection<T> {
    pub i2: IndexList,
    pub alpha: T,
    pub s_exact: Vector<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparqOutput<T> {
    pub y: Vector<T>,
    pub selection: SparseSelection<T>,
    pub approx: ApproxScores<T>,
    pub ledger_delta: TransferLedger,
}

/// Grouped-query output: one entry per query, with the transfers of the
/// shared KV head charged once in `ledger`.
#[derive(Debug, Clone, PartialEq)]
pub struct SparqGroupOutput<T> {
    pub heads: Vec<SparqOutput<T>>,
    pub ledger: TransferLedger,
}

pub(crate) fn check_query<T: Scalar>(q: &[T], cache: &KvCacheHead<T>) -> Result<()> {
    if q.len() != cache.head_dim() {
        return Err(SparqError::shape("query", cache.head_dim(), q.len()));
    }
    if q.iter().any(|v| !v.is_finite()) {
        return Err(SparqError::NonFinite("query"));
    }
    if cache.is_empty() {
        return Err(SparqError::EmptyCache);
    }
    Ok(())
}

/// Raw `q·k_p` for each listed position.
pub(crate) fn position_logits<T: Scalar>(q: &[T], cache: &KvCacheHead<T>, positions: &[usize]) -> Vec<T> {
    positions.iter().map(|&p| dot(q, cache.key(p))).collect()
}

/// `Σ w_i · v_{p_i}`, accumulated in list order.
pub(crate) fn weighted_values<T: Scalar>(weights: &[T], cache: &KvCacheHead<T>, positions: &[usize]) -> Vec<T> {
    let mut y = vec![T::zero(); cache.head_dim()];
    for (&w, &p) in weights.iter().zip(positions) {
        axpy(w, cache.value(p), &mut y);
    }
    y
}

pub(crate) fn sqrt_head_dim<T: Scalar>(head_dim: usize) -> T {
    T::from_count(head_dim).sqrt()
}
