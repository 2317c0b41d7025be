use crate::error::{Result, SparqError};
use crate::numkernel::argtopk;
use crate::scalar::Scalar;

/// Fraction of the true top-`k` positions that the approximate scores also
/// rank in their top `k`, both under the smallest-index tie rule.
pub fn topk_agreement<T: Scalar>(true_scores: &[T], approx_scores: &[T], k: usize) -> Result<f64> {
    if true_scores.len() != approx_scores.len() {
        return Err(SparqError::shape("approximate scores", true_scores.len(), approx_scores.len()));
    }
    if k == 0 || k > true_scores.len() {
        return Err(SparqError::InvalidConfig(format!(
            "agreement k={k} must lie in 1..={}",
            true_scores.len()
        )));
    }
    let truth = argtopk(true_scores, k);
    let approx = argtopk(approx_scores, k);
    Ok(overlap(&truth, &approx) as f64 / k as f64)
}

/// Size of the intersection of two ascending index lists.
pub fn overlap(a: &[usize], b: &[usize]) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

/// Excess kurtosis `m₄/m₂² − 3` from population moments.
pub fn fisher_kurtosis<T: Scalar>(x: &[T]) -> Result<f64> {
    if x.len() < 4 {
        return Err(SparqError::DegenerateDistribution("kurtosis needs at least 4 samples"));
    }
    let n = x.len() as f64;
    let mean = x.iter().map(|v| v.to_f64_lossless()).sum::<f64>() / n;
    let (mut m2, mut m4) = (0.0, 0.0);
    for v in x {
        let d = v.to_f64_lossless() - mean;
        let d2 = d * d;
        m2 += d2;
        m4 += d2 * d2;
    }
    m2 /= n;
    m4 /= n;
    if m2 == 0.0 {
        return Err(SparqError::DegenerateDistribution("zero variance"));
    }
    Ok(m4 / (m2 * m2) - 3.0)
}

/// `‖y − reference‖₂ / ‖reference‖₂`, or the absolute error when the
/// reference is zero.
pub fn rel_l2_error<T: Scalar>(y: &[T], reference: &[T]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (&a, &b) in y.iter().zip(reference) {
        let (a, b) = (a.to_f64_lossless(), b.to_f64_lossless());
        num += (a - b) * (a - b);
        den += b * b;
    }
    if den == 0.0 {
        num.sqrt()
    } else {
        (num / den).sqrt()
    }
}
