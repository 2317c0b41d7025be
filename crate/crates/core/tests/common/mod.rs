#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use sparq_core::KvCacheHead64;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

pub fn heavy(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let t = StudentT::new(3.0).unwrap();
    (0..n).map(|_| t.sample(rng)).collect()
}

pub fn random_cache(rng: &mut ChaCha8Rng, s: usize, d: usize) -> KvCacheHead64 {
    let mut c = KvCacheHead64::new(d).unwrap();
    for _ in 0..s {
        let k = gaussian(rng, d);
        let v = gaussian(rng, d);
        c.push(&k, &v).unwrap();
    }
    c
}

pub fn uniform(rng: &mut ChaCha8Rng, lo: usize, hi: usize) -> usize {
    rng.random_range(lo..=hi)
}

pub fn softmax(x: &[f64]) -> Vec<f64> {
    let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = x.iter().map(|v| (v - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}

/// Indices of the `k` largest values by full sort, ties to the smaller index.
pub fn topk_by_sort(x: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[b].partial_cmp(&x[a]).unwrap().then(a.cmp(&b)));
    let mut out: Vec<usize> = idx.into_iter().take(k).collect();
    out.sort_unstable();
    out
}

pub fn dense_oracle(q: &[f64], c: &KvCacheHead64) -> Vec<f64> {
    let d = q.len();
    let logits: Vec<f64> = (0..c.len())
        .map(|p| q.iter().zip(c.key(p)).map(|(a, b)| a * b).sum::<f64>() / (d as f64).sqrt())
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

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    if den == 0.0 {
        num.sqrt()
    } else {
        (num / den).sqrt()
    }
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
