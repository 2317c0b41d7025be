//! Comparison methods over the same cache and ledger: heavy-hitter
//! eviction, sink-plus-window attention, and exact-score top-k.

mod h2o;

pub use h2o::{h2o_attention, H2oState};

use crate::attention::{check_query, dense_scores, position_logits, sqrt_head_dim, weighted_values, AttentionOutput};
use crate::costmodel::{Category, TransferLedger};
use crate::error::{Result, SparqError};
use crate::kvcache::KvCacheHead;
use crate::numkernel::{argtopk, stable_softmax, IndexList, Vector};
use crate::scalar::Scalar;

/// Leading positions always attended by [`lm_infinite_attention`].
pub const LM_INFINITE_SINKS: usize = 16;

/// `{0..16} ∪ {S−(k−16)..S−1}`, or every position when `S ≤ k`.
pub fn lm_infinite_positions(seq_len: usize, budget: usize) -> Result<IndexList> {
    if seq_len <= budget {
        return Ok(IndexList::full(seq_len));
    }
    if budget <= LM_INFINITE_SINKS {
        return Err(SparqError::InvalidConfig(format!(
            "lm-infinite budget {budget} must exceed {LM_INFINITE_SINKS} when the sequence is longer"
        )));
    }
    let window = budget - LM_INFINITE_SINKS;
    let positions = (0..LM_INFINITE_SINKS).chain(seq_len - window..seq_len).collect();
    Ok(IndexList::from_sorted_unchecked(positions, seq_len))
}

/// Attention over the first 16 positions and the most recent `k − 16`.
/// Charges `2·k·d_h` reads.
pub fn lm_infinite_attention<T: Scalar>(
    q: &[T],
    cache: &KvCacheHead<T>,
    budget: usize,
) -> Result<AttentionOutput<T>> {
    check_query(q, cache)?;
    let positions = lm_infinite_positions(cache.len(), budget)?;
    let logits = position_logits(q, cache, &positions);
    let weights = stable_softmax(&logits, sqrt_head_dim(cache.head_dim()))?;
    let y = Vector::from_raw(weighted_values(&weights, cache, &positions));
    let mut ledger_delta = TransferLedger::new();
    let n = (positions.len() * cache.head_dim()) as u64;
    ledger_delta.read(Category::KeyPositions, n);
    ledger_delta.read(Category::Values, n);
    Ok(AttentionOutput {
        y,
        positions,
        weights,
        ledger_delta,
    })
}

/// Exact scores over every key, values fetched only for the top `k` scores.
///
/// By default the kept scores are not renormalised, so the output is
/// `(s ∘ m_s)·V`. Charges `S·d_h + k·d_h` reads.
pub fn flexgen_attention<T: Scalar>(
    q: &[T],
    cache: &KvCacheHead<T>,
    budget: usize,
    renormalize: bool,
) -> Result<AttentionOutput<T>> {
    let s = dense_scores(q, cache)?;
    let positions = argtopk(&s, budget);
    let mut weights: Vec<T> = positions.iter().map(|&p| s[p]).collect();
    if renormalize {
        let mut z = T::zero();
        for &w in &weights {
            z += w;
        }
        for w in &mut weights {
            *w /= z;
        }
    }
    let y = Vector::from_raw(weighted_values(&weights, cache, &positions));
    let mut ledger_delta = TransferLedger::new();
    let d = cache.head_dim() as u64;
    ledger_delta.read(Category::KeyPositions, cache.len() as u64 * d);
    ledger_delta.read(Category::Values, positions.len() as u64 * d);
    Ok(AttentionOutput {
        y,
        positions,
        weights: Vector::from_raw(weights),
        ledger_delta,
    })
}
