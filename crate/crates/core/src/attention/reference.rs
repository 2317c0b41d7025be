//! Intermediate approximations between dense attention and SparQ. Used to
//! validate each link of the chain; not on any hot path.

use super::{check_query, dense_scores, position_logits, sqrt_head_dim, weighted_values};
use crate::error::{Result, SparqError};
use crate::kvcache::KvCacheHead;
use crate::numkernel::{stable_softmax, IndexList, Vector};
use crate::scalar::Scalar;

fn check_mask<T: Scalar>(mask: &IndexList, cache: &KvCacheHead<T>) -> Result<()> {
    match mask.last() {
        Some(&p) if p >= cache.len() => Err(SparqError::IndexOutOfRange {
            index: p,
            bound: cache.len(),
        }),
        _ => Ok(()),
    }
}

/// `(s ∘ m_s)·V`: dense scores, values fetched only where the mask is set.
pub fn eq5_y1<T: Scalar>(q: &[T], cache: &KvCacheHead<T>, mask: &IndexList) -> Result<Vector<T>> {
    check_mask(mask, cache)?;
    let s = dense_scores(q, cache)?;
    let weights: Vec<T> = mask.iter().map(|&p| s[p]).collect();
    Ok(Vector::from_raw(weighted_values(&weights, cache, mask)))
}

/// `y1 + (1 − s·m_s)·v̄`: unselected mass reassigned to the mean value.
pub fn eq6_y2<T: Scalar>(q: &[T], cache: &KvCacheHead<T>, mask: &IndexList) -> Result<Vector<T>> {
    let y1 = eq5_y1(q, cache, mask)?;
    let s = dense_scores(q, cache)?;
    let mut covered = T::zero();
    for &p in mask.iter() {
        covered += s[p];
    }
    let rest = T::one() - covered;
    Ok(Vector::from_raw(
        y1.iter()
            .zip(cache.mean_value())
            .map(|(&y, &m)| y + rest * m)
            .collect(),
    ))
}

/// Softmax restricted to the masked positions, times their values: the
/// `ε → 0` limit of adding `log(m + ε)` to the logits.
pub fn eq8_y3<T: Scalar>(q: &[T], cache: &KvCacheHead<T>, mask: &IndexList) -> Result<Vector<T>> {
    check_query(q, cache)?;
    check_mask(mask, cache)?;
    let logits = position_logits(q, cache, mask);
    let s = stable_softmax(&logits, sqrt_head_dim(cache.head_dim()))?;
    Ok(Vector::from_raw(weighted_values(&s, cache, mask)))
}
