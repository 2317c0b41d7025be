//! Heavy-hitter eviction: keep the `l` most recent positions plus the
//! positions with the largest accumulated attention mass, within a fixed
//! budget of `k` retained positions.

use crate::attention::{check_query, position_logits, sqrt_head_dim, weighted_values, AttentionOutput};
use crate::costmodel::{Category, TransferLedger};
use crate::error::{Result, SparqError};
use crate::kvcache::KvCacheHead;
use crate::numkernel::{stable_softmax, IndexList, Vector};
use crate::scalar::Scalar;

/// Per-head eviction state. Must observe every decoding step in order.
#[derive(Debug, Clone, PartialEq)]
pub struct H2oState<T> {
    retained: Vec<usize>,
    cum_scores: Vec<T>,
    budget: usize,
    local: usize,
    seen: usize,
}

impl<T: Scalar> H2oState<T> {
    pub fn new(budget: usize, local: usize) -> Result<Self> {
        if budget == 0 {
            return Err(SparqError::InvalidConfig("h2o budget must be at least 1".into()));
        }
        if local > budget {
            return Err(SparqError::InvalidConfig(format!(
                "h2o local window {local} exceeds budget {budget}"
            )));
        }
        Ok(H2oState {
            retained: Vec::new(),
            cum_scores: Vec::new(),
            budget,
            local,
            seen: 0,
        })
    }

    /// Local window of `k/4`, the rest heavy hitters.
    pub fn with_quarter_local(budget: usize) -> Result<Self> {
        Self::new(budget, budget / 4)
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn local(&self) -> usize {
        self.local
    }

    pub fn retained(&self) -> &[usize] {
        &self.retained
    }

    pub fn cum_scores(&self) -> &[T] {
        &self.cum_scores
    }

    /// Drives the state through every position of `cache` except the last,
    /// using `history[p]` as the query issued when position `p` was newest.
    pub fn warm_up<Q: AsRef<[T]>>(&mut self, cache: &KvCacheHead<T>, history: &[Q]) -> Result<()> {
        if self.seen != 0 {
            return Err(SparqError::InvalidConfig("h2o warm-up needs a fresh state".into()));
        }
        let steps = cache.len().saturating_sub(1);
        if history.len() < steps {
            return Err(SparqError::shape("h2o history queries", steps, history.len()));
        }
        let mut prefix = KvCacheHead::new(cache.head_dim())?;
        for (p, q) in history.iter().take(steps).enumerate() {
            prefix.push(cache.key(p), cache.value(p))?;
            h2o_attention(q.as_ref(), self, &prefix)?;
        }
        Ok(())
    }

    fn evict_if_over_budget(&mut self, seq_len: usize) {
        if self.retained.len() <= self.budget {
            return;
        }
        let local_start = seq_len.saturating_sub(self.local);
        let mut victim: Option<usize> = None;
        for (slot, &pos) in self.retained.iter().enumerate() {
            if pos >= local_start {
                continue;
            }
            // strict comparison keeps the earliest (smallest index) on ties
            match victim {
                Some(v) if self.cum_scores[slot] >= self.cum_scores[v] => {}
                _ => victim = Some(slot),
            }
        }
        let slot = victim.expect("a non-local position exists whenever the budget is exceeded");
        self.retained.remove(slot);
        self.cum_scores.remove(slot);
    }
}

/// One decoding step: admit the newest position, evict at most one
/// non-local position if over budget, attend densely over what is retained
/// and accumulate the resulting scores.
///
/// Charges `2·k·d_h` reads for retained keys and values and `2·S` for the
/// score vector read and write-back.
pub fn h2o_attention<T: Scalar>(
    q: &[T],
    state: &mut H2oState<T>,
    cache: &KvCacheHead<T>,
) -> Result<AttentionOutput<T>> {
    check_query(q, cache)?;
    let s = cache.len();
    if state.seen + 1 != s {
        return Err(SparqError::InvalidConfig(format!(
            "h2o state has seen {} positions but the cache holds {s}",
            state.seen
        )));
    }
    state.retained.push(s - 1);
    state.cum_scores.push(T::zero());
    state.evict_if_over_budget(s);

    let positions = IndexList::from_sorted_unchecked(state.retained.clone(), s);
    let logits = position_logits(q, cache, &positions);
    let weights = stable_softmax(&logits, sqrt_head_dim(cache.head_dim()))?;
    let y = Vector::from_raw(weighted_values(&weights, cache, &positions));
    for (acc, &w) in state.cum_scores.iter_mut().zip(weights.iter()) {
        *acc += w;
    }
    state.seen = s;

    let mut ledger_delta = TransferLedger::new();
    let n = (positions.len() * cache.head_dim()) as u64;
    ledger_delta.read(Category::KeyPositions, n);
    ledger_delta.read(Category::Values, n);
    ledger_delta.read(Category::ScoreBookkeeping, s as u64);
    ledger_delta.write(Category::ScoreBookkeeping, s as u64);
    Ok(AttentionOutput {
        y,
        positions,
        weights,
        ledger_delta,
    })
}
