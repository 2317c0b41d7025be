use super::{check_query, position_logits, sqrt_head_dim, weighted_values, AttentionOutput};
use crate::costmodel::{Category, TransferLedger};
use crate::error::{Result, SparqError};
use crate::kvcache::KvCacheHead;
use crate::numkernel::{stable_softmax, IndexList, Vector};
use crate::scalar::Scalar;

/// `softmax(q·Kᵀ/√d_h)` over every cached position.
pub fn dense_scores<T: Scalar>(q: &[T], cache: &KvCacheHead<T>) -> Result<Vector<T>> {
    check_query(q, cache)?;
    let all = IndexList::full(cache.len());
    let logits = position_logits(q, cache, &all);
    stable_softmax(&logits, sqrt_head_dim(cache.head_dim()))
}

fn attend_all<T: Scalar>(q: &[T], cache: &KvCacheHead<T>) -> Result<(IndexList, Vector<T>, Vector<T>)> {
    let weights = dense_scores(q, cache)?;
    let all = IndexList::full(cache.len());
    let y = weighted_values(&weights, cache, &all);
    Ok((all, weights, Vector::from_raw(y)))
}

fn charge_full_read(ledger: &mut TransferLedger, seq_len: usize, head_dim: usize) {
    let sd = (seq_len * head_dim) as u64;
    ledger.read(Category::KeyPositions, sd);
    ledger.read(Category::Values, sd);
}

/// `y = softmax(q·Kᵀ/√d_h)·V`. Charges `2·S·d_h` reads; the write of the
/// current key and value is charged by [`KvCacheHead::append`].
pub fn dense_attention<T: Scalar>(q: &[T], cache: &KvCacheHead<T>) -> Result<AttentionOutput<T>> {
    let (positions, weights, y) = attend_all(q, cache)?;
    let mut ledger_delta = TransferLedger::new();
    charge_full_read(&mut ledger_delta, cache.len(), cache.head_dim());
    Ok(AttentionOutput {
        y,
        positions,
        weights,
        ledger_delta,
    })
}

/// Dense attention for a group of queries sharing one KV head. The keys and
/// values are charged once, on the first output.
pub fn dense_attention_group<T: Scalar, Q: AsRef<[T]>>(
    queries: &[Q],
    cache: &KvCacheHead<T>,
) -> Result<Vec<AttentionOutput<T>>> {
    if queries.is_empty() {
        return Err(SparqError::InvalidConfig("query group is empty".into()));
    }
    let mut out = Vec::with_capacity(queries.len());
    for (i, q) in queries.iter().enumerate() {
        let (positions, weights, y) = attend_all(q.as_ref(), cache)?;
        let mut ledger_delta = TransferLedger::new();
        if i == 0 {
            charge_full_read(&mut ledger_delta, cache.len(), cache.head_dim());
        }
        out.push(AttentionOutput {
            y,
            positions,
            weights,
            ledger_delta,
        });
    }
    Ok(out)
}
