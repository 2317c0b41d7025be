//! SparQ attention: approximate scores from the largest query components,
//! exact attention over the best-scoring positions, and interpolation with
//! the running mean value for the mass left behind.

use super::{
    check_query, position_logits, sqrt_head_dim, weighted_values, ApproxScores,
    AttentionHeadConfig, SparqGroupOutput, SparqOutput, SparseSelection,
};
use crate::costmodel::{Category, TransferLedger};
use crate::error::{Result, SparqError};
use crate::kvcache::{KeyLayout, KvCacheHead};
use crate::numkernel::{argtopk, stable_softmax, IndexList, Vector};
use crate::scalar::Scalar;

fn charge_component_reads<T: Scalar>(ledger: &mut TransferLedger, cache: &KvCacheHead<T>, rank: usize) {
    let n = (cache.len() * rank) as u64;
    ledger.read(Category::KeyComponents, n);
    if cache.layout() == KeyLayout::PositionMajorOnly {
        ledger.note_strided(n);
    }
}

fn charge_position_reads(ledger: &mut TransferLedger, count: usize, head_dim: usize) {
    let n = (count * head_dim) as u64;
    ledger.read(Category::KeyPositions, n);
    ledger.read(Category::Values, n);
}

/// Approximate scores for `q` using only the components in `i1`.
///
/// The temperature is `√(d_h · ‖q[i1]‖₁ / ‖q‖₁)`; a zero query falls back to
/// `√d_h`, which with all-zero logits gives uniform scores.
fn approx_scores<T: Scalar>(q: &[T], cache: &KvCacheHead<T>, i1: IndexList) -> Result<ApproxScores<T>> {
    let mut l1_selected = T::zero();
    for &c in i1.iter() {
        l1_selected += q[c].abs();
    }
    let mut l1 = T::zero();
    for &v in q {
        l1 += v.abs();
    }
    let d = T::from_count(cache.head_dim());
    let tau = if l1 > T::zero() {
        (d * (l1_selected / l1)).sqrt()
    } else {
        d.sqrt()
    };
    let mut logits = vec![T::zero(); cache.len()];
    for &c in i1.iter() {
        let qc = q[c];
        for (acc, &k) in logits.iter_mut().zip(cache.key_component(c)) {
            *acc += qc * k;
        }
    }
    let s_hat = stable_softmax(&logits, tau)?;
    Ok(ApproxScores { i1, tau, s_hat })
}

/// The last `local` positions, plus the best of the rest by `ranking`, up
/// to `topk` positions in total.
///
/// Equivalent to `argtopk(ranking + m, k)` with `m` a large constant on the
/// local window, without relying on the constant dominating the ranking.
pub fn select_positions<T: Scalar>(ranking: &[T], topk: usize, local: usize) -> IndexList {
    let s = ranking.len();
    let k = topk.min(s);
    let l = local.min(k);
    let split = s - l;
    let mut chosen = argtopk(&ranking[..split], k - l).as_slice().to_vec();
    chosen.extend(split..s);
    IndexList::from_sorted_unchecked(chosen, s)
}

fn finish_selection<T: Scalar>(
    q: &[T],
    cache: &KvCacheHead<T>,
    s_hat: &[T],
    i2: IndexList,
) -> Result<SparseSelection<T>> {
    let mut alpha = T::zero();
    for &p in i2.iter() {
        alpha += s_hat[p];
    }
    let alpha = alpha.max(T::zero()).min(T::one());
    let logits = position_logits(q, cache, &i2);
    let s_exact = stable_softmax(&logits, sqrt_head_dim(cache.head_dim()))?;
    Ok(SparseSelection { i2, alpha, s_exact })
}

fn interpolate<T: Scalar>(
    selection: &SparseSelection<T>,
    cache: &KvCacheHead<T>,
    reallocate_mean: bool,
) -> Vector<T> {
    let y3 = weighted_values(&selection.s_exact, cache, &selection.i2);
    if !reallocate_mean {
        return Vector::from_raw(y3);
    }
    let a = selection.alpha;
    let rest = T::one() - a;
    Vector::from_raw(
        y3.iter()
            .zip(cache.mean_value())
            .map(|(&y, &m)| a * y + rest * m)
            .collect(),
    )
}

/// Step 1: pick the `r` largest-magnitude query components and score every
/// position with them. Charges `S·r` key-component reads.
pub fn sparq_step1<T: Scalar>(
    q: &[T],
    cache: &KvCacheHead<T>,
    cfg: &AttentionHeadConfig,
    ledger: &mut TransferLedger,
) -> Result<ApproxScores<T>> {
    check_query(q, cache)?;
    let magnitudes: Vec<T> = q.iter().map(|v| v.abs()).collect();
    let i1 = argtopk(&magnitudes, cfg.rank);
    charge_component_reads(ledger, cache, i1.len());
    approx_scores(q, cache, i1)
}

/// Step 2: choose positions from the approximate scores (local window
/// forced) and compute exact scores over them. Charges `2·k·d_h` reads for
/// the selected keys and values.
pub fn sparq_step2<T: Scalar>(
    approx: &ApproxScores<T>,
    q: &[T],
    cache: &KvCacheHead<T>,
    cfg: &AttentionHeadConfig,
    ledger: &mut TransferLedger,
) -> Result<SparseSelection<T>> {
    check_query(q, cache)?;
    if approx.s_hat.len() != cache.len() {
        return Err(SparqError::shape("approximate scores", cache.len(), approx.s_hat.len()));
    }
    let i2 = select_positions(&approx.s_hat, cfg.topk, cfg.local);
    charge_position_reads(ledger, i2.len(), cache.head_dim());
    finish_selection(q, cache, &approx.s_hat, i2)
}

/// Step 3: attend over the selected values, then (with mean reallocation)
/// blend in the running mean value with weight `1 − α`.
pub fn sparq_step3<T: Scalar>(
    approx: ApproxScores<T>,
    selection: SparseSelection<T>,
    cache: &KvCacheHead<T>,
    cfg: &AttentionHeadConfig,
    ledger: TransferLedger,
) -> Result<SparqOutput<T>> {
    if let Some(&p) = selection.i2.last() {
        if p >= cache.len() {
            return Err(SparqError::IndexOutOfRange {
                index: p,
                bound: cache.len(),
            });
        }
    }
    if selection.s_exact.len() != selection.i2.len() {
        return Err(SparqError::shape("exact scores", selection.i2.len(), selection.s_exact.len()));
    }
    let y = interpolate(&selection, cache, cfg.reallocate_mean);
    Ok(SparqOutput {
        y,
        selection,
        approx,
        ledger_delta: ledger,
    })
}

/// All three steps for a single query.
pub fn sparq_attention<T: Scalar>(
    q: &[T],
    cache: &KvCacheHead<T>,
    cfg: &AttentionHeadConfig,
) -> Result<SparqOutput<T>> {
    let mut ledger = TransferLedger::new();
    let approx = sparq_step1(q, cache, cfg, &mut ledger)?;
    let selection = sparq_step2(&approx, q, cache, cfg, &mut ledger)?;
    sparq_step3(approx, selection, cache, cfg, ledger)
}

/// SparQ for `g` queries sharing one KV head.
///
/// Component selection uses `Σ|q|` over the group and position selection
/// uses the group sum of approximate scores, so the key components and the
/// selected keys and values are fetched once for the whole group. Each query
/// keeps its own temperature, scores, `α` and output.
pub fn sparq_attention_gqa<T: Scalar, Q: AsRef<[T]>>(
    queries: &[Q],
    cache: &KvCacheHead<T>,
    cfg: &AttentionHeadConfig,
) -> Result<SparqGroupOutput<T>> {
    if queries.len() != cfg.gqa {
        return Err(SparqError::shape("query group", cfg.gqa, queries.len()));
    }
    for q in queries {
        check_query(q.as_ref(), cache)?;
    }
    let d = cache.head_dim();
    let mut magnitudes = vec![T::zero(); d];
    for q in queries {
        for (m, &v) in magnitudes.iter_mut().zip(q.as_ref()) {
            *m += v.abs();
        }
    }
    let i1 = argtopk(&magnitudes, cfg.rank);
    let mut ledger = TransferLedger::new();
    charge_component_reads(&mut ledger, cache, i1.len());

    let approxes = queries
        .iter()
        .map(|q| approx_scores(q.as_ref(), cache, i1.clone()))
        .collect::<Result<Vec<_>>>()?;
    let mut summed = vec![T::zero(); cache.len()];
    for a in &approxes {
        for (acc, &s) in summed.iter_mut().zip(a.s_hat.iter()) {
            *acc += s;
        }
    }
    let i2 = select_positions(&summed, cfg.topk, cfg.local);
    charge_position_reads(&mut ledger, i2.len(), d);

    let heads = queries
        .iter()
        .zip(approxes)
        .map(|(q, approx)| {
            let selection = finish_selection(q.as_ref(), cache, &approx.s_hat, i2.clone())?;
            let y = interpolate(&selection, cache, cfg.reallocate_mean);
            Ok(SparqOutput {
                y,
                selection,
                approx,
                ledger_delta: TransferLedger::new(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SparqGroupOutput { heads, ledger })
}
