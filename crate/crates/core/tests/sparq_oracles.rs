mod common;

use common::*;
use rand::Rng;
use sparq_core::attention::reference::{eq5_y1, eq6_y2, eq8_y3};
use sparq_core::attention::select_positions;
use sparq_core::{
    dense_attention, sparq_attention, sparq_attention_gqa, sparq_step1, sparq_step2, AttentionHeadConfig,
    IndexList, KvCacheHead64, TransferLedger,
};

/// Straight-line transcription of the three-step algorithm for one query,
/// with the local window as a literal `+1` mask on the approximate scores.
fn algorithm_one(q: &[f64], c: &KvCacheHead64, r: usize, k: usize, l: usize, realloc: bool) -> (Vec<f64>, Vec<usize>, f64) {
    let (s, d) = (c.len(), q.len());
    let absq: Vec<f64> = q.iter().map(|v| v.abs()).collect();
    let i1 = topk_by_sort(&absq, r.min(d));
    let mut approx_logits = vec![0.0; s];
    for (p, l) in approx_logits.iter_mut().enumerate() {
        for &i in &i1 {
            *l += q[i] * c.key(p)[i];
        }
    }
    let l1_sel: f64 = i1.iter().map(|&i| absq[i]).sum();
    let l1: f64 = absq.iter().sum();
    let tau = (d as f64 * l1_sel / l1).sqrt();
    let s_hat = softmax(&approx_logits.iter().map(|x| x / tau).collect::<Vec<_>>());
    let masked: Vec<f64> = (0..s).map(|p| s_hat[p] + if p + l >= s { 1.0 } else { 0.0 }).collect();
    let i2 = topk_by_sort(&masked, k.min(s));
    let alpha: f64 = i2.iter().map(|&p| s_hat[p]).sum();
    let exact_logits: Vec<f64> = i2
        .iter()
        .map(|&p| q.iter().zip(c.key(p)).map(|(a, b)| a * b).sum::<f64>() / (d as f64).sqrt())
        .collect();
    let sc = softmax(&exact_logits);
    let mut y3 = vec![0.0; d];
    for (w, &p) in sc.iter().zip(&i2) {
        for (y, v) in y3.iter_mut().zip(c.value(p)) {
            *y += w * v;
        }
    }
    let mut mean = vec![0.0; d];
    for p in 0..s {
        for (m, v) in mean.iter_mut().zip(c.value(p)) {
            *m += v / s as f64;
        }
    }
    let y = if realloc {
        y3.iter().zip(&mean).map(|(a, m)| alpha * a + (1.0 - alpha) * m).collect()
    } else {
        y3
    };
    (y, i2, alpha)
}

/// Approximate scores with the component mask materialised over all `d_h`
/// entries and applied densely.
fn masked_query_scores(q: &[f64], c: &KvCacheHead64, mask: &[bool], tau: f64) -> Vec<f64> {
    let qm: Vec<f64> = q.iter().zip(mask).map(|(v, &m)| if m { *v } else { 0.0 }).collect();
    let logits: Vec<f64> = (0..c.len())
        .map(|p| qm.iter().zip(c.key(p)).map(|(a, b)| a * b).sum::<f64>() / tau)
        .collect();
    softmax(&logits)
}

/// Re-softmax with `log(m + ε)` added to every logit, `ε = 1e-300`.
fn masked_softmax_output(q: &[f64], c: &KvCacheHead64, selected: &[usize]) -> Vec<f64> {
    let d = q.len();
    let logits: Vec<f64> = (0..c.len())
        .map(|p| {
            let m = if selected.contains(&p) { 1.0 } else { 0.0 };
            q.iter().zip(c.key(p)).map(|(a, b)| a * b).sum::<f64>() / (d as f64).sqrt() + (m + 1e-300f64).ln()
        })
        .collect();
    let s = softmax(&logits);
    let mut y = vec![0.0; d];
    for (p, w) in s.iter().enumerate() {
        for (o, v) in y.iter_mut().zip(c.value(p)) {
            *o += w * v;
        }
    }
    y
}

#[test]
fn step_one_matches_component_mask_oracle() {
    let mut rng = rng(11);
    let c = random_cache(&mut rng, 32, 16);
    let q = heavy(&mut rng, 16);
    let cfg = AttentionHeadConfig::new(16, 1, 4, 8, 2).unwrap();
    let a = sparq_step1(&q, &c, &cfg, &mut TransferLedger::new()).unwrap();
    let absq: Vec<f64> = q.iter().map(|v| v.abs()).collect();
    let chosen = topk_by_sort(&absq, 4);
    assert_eq!(a.i1.as_slice(), chosen.as_slice());
    let mask: Vec<bool> = (0..16).map(|i| chosen.contains(&i)).collect();
    let tau = (16.0 * chosen.iter().map(|&i| absq[i]).sum::<f64>() / absq.iter().sum::<f64>()).sqrt();
    assert!((a.tau - tau).abs() < 1e-12);
    let oracle = masked_query_scores(&q, &c, &mask, tau);
    assert!(max_abs_diff(&a.s_hat, &oracle) < 1e-12);
    assert!((a.s_hat.iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn step_two_matches_brute_force_selection() {
    let mut rng = rng(12);
    for _ in 0..50 {
        let c = random_cache(&mut rng, 64, 8);
        let q = heavy(&mut rng, 8);
        let cfg = AttentionHeadConfig::new(8, 1, 3, 8, 2).unwrap();
        let mut ledger = TransferLedger::new();
        let a = sparq_step1(&q, &c, &cfg, &mut ledger).unwrap();
        let sel = sparq_step2(&a, &q, &c, &cfg, &mut ledger).unwrap();
        // enumerate the 62 non-local positions, keep the 6 best
        let mut rest: Vec<(f64, usize)> = (0..62).map(|p| (a.s_hat[p], p)).collect();
        rest.sort_by(|x, y| y.0.partial_cmp(&x.0).unwrap().then(x.1.cmp(&y.1)));
        let mut oracle: Vec<usize> = rest.iter().take(6).map(|x| x.1).collect();
        oracle.extend([62, 63]);
        oracle.sort_unstable();
        assert_eq!(sel.i2.as_slice(), oracle.as_slice());
        let alpha: f64 = oracle.iter().map(|&p| a.s_hat[p]).sum();
        assert!((sel.alpha - alpha).abs() < 1e-12);
    }
}

#[test]
fn three_steps_match_monolithic_transcription() {
    let mut rng = rng(13);
    let c = random_cache(&mut rng, 32, 8);
    let q = heavy(&mut rng, 8);
    let cfg = AttentionHeadConfig::new(8, 1, 4, 8, 2).unwrap();
    let out = sparq_attention(&q, &c, &cfg).unwrap();
    let (y, i2, alpha) = algorithm_one(&q, &c, 4, 8, 2, true);
    assert_eq!(out.selection.i2.as_slice(), i2.as_slice());
    assert!((out.selection.alpha - alpha).abs() < 1e-12);
    assert!(max_abs_diff(&out.y, &y) < 1e-12);
}

#[test]
fn pipeline_matches_oracles_on_random_instances() {
    let mut rng = rng(14);
    for _ in 0..500 {
        let s = uniform(&mut rng, 1, 64);
        let d = uniform(&mut rng, 1, 32);
        let r = uniform(&mut rng, 1, d);
        let k = uniform(&mut rng, 1, s);
        let l = uniform(&mut rng, 0, k);
        let realloc = rng.random_range(0..2) == 1;
        let c = random_cache(&mut rng, s, d);
        let q = heavy(&mut rng, d);
        let cfg = AttentionHeadConfig::new(d, 1, r, k, l).unwrap().with_reallocate_mean(realloc);
        let out = sparq_attention(&q, &c, &cfg).unwrap();
        let (y, i2, alpha) = algorithm_one(&q, &c, r, k, l, realloc);
        assert_eq!(out.selection.i2.as_slice(), i2.as_slice());
        assert!((out.selection.alpha - alpha.min(1.0)).abs() < 1e-12);
        assert!(max_abs_diff(&out.y, &y) < 1e-12, "S={s} d={d} r={r} k={k} l={l}");
        let y3 = masked_softmax_output(&q, &c, &i2);
        let lib_y3 = eq8_y3(&q, &c, &out.selection.i2).unwrap();
        assert!(max_abs_diff(&lib_y3, &y3) < 1e-12);
    }
}

#[test]
fn grouped_queries_match_group_sum_oracle() {
    let mut rng = rng(15);
    for _ in 0..20 {
        let (s, d, g, r, k, l) = (32, 8, 4, 4, 8, 2);
        let c = random_cache(&mut rng, s, d);
        let qs: Vec<Vec<f64>> = (0..g).map(|_| heavy(&mut rng, d)).collect();
        let cfg = AttentionHeadConfig::new(d, g, r, k, l).unwrap();
        let out = sparq_attention_gqa(&qs, &c, &cfg).unwrap();

        let mut abs_sum = vec![0.0; d];
        for q in &qs {
            for (a, v) in abs_sum.iter_mut().zip(q) {
                *a += v.abs();
            }
        }
        let i1 = topk_by_sort(&abs_sum, r);
        let mask: Vec<bool> = (0..d).map(|i| i1.contains(&i)).collect();
        let mut s_sum = vec![0.0; s];
        let mut s_hats = Vec::new();
        for q in &qs {
            let l1: f64 = q.iter().map(|v| v.abs()).sum();
            let l1_sel: f64 = i1.iter().map(|&i| q[i].abs()).sum();
            let tau = (d as f64 * l1_sel / l1).sqrt();
            let sh = masked_query_scores(q, &c, &mask, tau);
            for (a, v) in s_sum.iter_mut().zip(&sh) {
                *a += v;
            }
            s_hats.push(sh);
        }
        let boosted: Vec<f64> = (0..s).map(|p| s_sum[p] + if p + l >= s { g as f64 } else { 0.0 }).collect();
        let i2 = topk_by_sort(&boosted, k);
        for (h, q) in out.heads.iter().zip(&qs) {
            assert_eq!(h.approx.i1.as_slice(), i1.as_slice());
            assert_eq!(h.selection.i2.as_slice(), i2.as_slice());
            // reallocation is off by default for groups
            let y = masked_softmax_output(q, &c, &i2);
            assert!(max_abs_diff(&h.y, &y) < 1e-12);
        }
        for (h, sh) in out.heads.iter().zip(&s_hats) {
            let alpha: f64 = i2.iter().map(|&p| sh[p]).sum();
            assert!((h.selection.alpha - alpha).abs() < 1e-12);
            assert!(max_abs_diff(&h.approx.s_hat, sh) < 1e-12);
        }
        assert_eq!(out.ledger.total(), (s * r) as u64 + 2 * (k * d) as u64);
    }
}

#[test]
fn temperature_limit_cases() {
    let mut rng = rng(16);
    let c = random_cache(&mut rng, 10, 128);
    let q = gaussian(&mut rng, 128);
    let full = AttentionHeadConfig::new(128, 1, 128, 10, 0).unwrap();
    let a = sparq_step1(&q, &c, &full, &mut TransferLedger::new()).unwrap();
    assert!((a.tau - 128f64.sqrt()).abs() < 1e-12);

    // exactly r nonzero components
    let mut sparse = vec![0.0; 128];
    for (i, v) in gaussian(&mut rng, 32).into_iter().enumerate() {
        sparse[i * 4] = v;
    }
    let cfg = AttentionHeadConfig::new(128, 1, 32, 10, 0).unwrap();
    let a = sparq_step1(&sparse, &c, &cfg, &mut TransferLedger::new()).unwrap();
    assert!((a.tau - 128f64.sqrt()).abs() < 1e-12);

    let uniform_mag: Vec<f64> = (0..128).map(|i| if i % 3 == 0 { -0.7 } else { 0.7 }).collect();
    let a = sparq_step1(&uniform_mag, &c, &cfg, &mut TransferLedger::new()).unwrap();
    assert!((a.tau - 32f64.sqrt()).abs() < 1e-12);
}

#[test]
fn derivation_chain_endpoints() {
    let mut rng = rng(17);
    let c = random_cache(&mut rng, 20, 6);
    let q = gaussian(&mut rng, 6);
    let all = IndexList::full(20);
    let dense = dense_attention(&q, &c).unwrap();
    let y1 = eq5_y1(&q, &c, &all).unwrap();
    let y2 = eq6_y2(&q, &c, &all).unwrap();
    assert!(max_abs_diff(&y1, &dense.y) < 1e-12);
    assert!(max_abs_diff(&y2, &y1) < 1e-15);
    assert!(max_abs_diff(&dense.y, &dense_oracle(&q, &c)) < 1e-12);
}

#[test]
fn mean_value_timing_sensitivity() {
    // Appending before attending puts the newest value in the mean. The
    // alternative shifts the output by exactly (1 − α)(v_new − v̄_old)/S.
    let mut rng = rng(18);
    let mut c = random_cache(&mut rng, 40, 8);
    let old_mean = c.mean_value().to_vec();
    let (k_new, v_new) = (gaussian(&mut rng, 8), gaussian(&mut rng, 8));
    c.push(&k_new, &v_new).unwrap();
    let q = heavy(&mut rng, 8);
    let cfg = AttentionHeadConfig::new(8, 1, 2, 6, 1).unwrap();
    let out = sparq_attention(&q, &c, &cfg).unwrap();
    let a = out.selection.alpha;
    let y3: Vec<f64> = out.y.iter().zip(c.mean_value()).map(|(y, m)| (y - (1.0 - a) * m) / a).collect();
    let excluded: Vec<f64> = y3.iter().zip(&old_mean).map(|(y, m)| a * y + (1.0 - a) * m).collect();
    for j in 0..8 {
        let shift = out.y[j] - excluded[j];
        let predicted = (1.0 - a) * (v_new[j] - old_mean[j]) / 41.0;
        assert!((shift - predicted).abs() < 1e-12);
    }
}

#[test]
fn local_window_selection_is_forced_even_with_saturated_scores() {
    // One approximate score of exactly 1 ties a +1 local boost; the window
    // must still be selected.
    let mut ranking = vec![0.0; 10];
    ranking[0] = 1.0;
    let sel = select_positions(&ranking, 3, 2);
    assert_eq!(sel.as_slice(), &[0, 8, 9]);
}
