//! Deterministic numeric primitives shared by every attention implementation.
//!
//! All reductions accumulate in ascending index order so results are
//! bit-reproducible across runs and across thread counts.

use std::cmp::Ordering;
use std::ops::Deref;

use crate::error::{Result, SparqError};
use crate::scalar::Scalar;

/// Dense vector with finite entries.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Vector<T>(Vec<T>);

impl<T: Scalar> Vector<T> {
    /// Validates that every entry is finite.
    pub fn new(values: Vec<T>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(SparqError::NonFinite("vector"));
        }
        Ok(Vector(values))
    }

    pub fn zeros(len: usize) -> Self {
        Vector(vec![T::zero(); len])
    }

    pub(crate) fn from_raw(values: Vec<T>) -> Self {
        Vector(values)
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<T> {
        self.0
    }
}

impl<T> Deref for Vector<T> {
    type Target = [T];

    fn deref(&self) -> &[T] {
        &self.0
    }
}

/// Row-major dense matrix with finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    values: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn new(rows: usize, cols: usize, values: Vec<T>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(SparqError::shape("matrix payload", rows * cols, values.len()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(SparqError::NonFinite("matrix"));
        }
        Ok(Matrix { rows, cols, values })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            values: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.values[i * n + i] = T::one();
        }
        m
    }

    pub(crate) fn from_raw(rows: usize, cols: usize, values: Vec<T>) -> Self {
        debug_assert_eq!(values.len(), rows * cols);
        Matrix { rows, cols, values }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.values[i * self.cols + j]
    }

    pub fn transpose(&self) -> Self {
        let mut out = Vec::with_capacity(self.values.len());
        for j in 0..self.cols {
            for i in 0..self.rows {
                out.push(self.values[i * self.cols + j]);
            }
        }
        Matrix::from_raw(self.cols, self.rows, out)
    }
}

/// Strictly increasing list of indices, all below a declared bound.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct IndexList {
    indices: Vec<usize>,
    bound: usize,
}

impl IndexList {
    pub fn new(indices: Vec<usize>, bound: usize) -> Result<Self> {
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(SparqError::UnorderedIndices);
        }
        if let Some(&last) = indices.last() {
            if last >= bound {
                return Err(SparqError::IndexOutOfRange { index: last, bound });
            }
        }
        Ok(IndexList { indices, bound })
    }

    /// `0..bound`.
    pub fn full(bound: usize) -> Self {
        IndexList {
            indices: (0..bound).collect(),
            bound,
        }
    }

    pub(crate) fn from_sorted_unchecked(indices: Vec<usize>, bound: usize) -> Self {
        debug_assert!(indices.windows(2).all(|w| w[0] < w[1]));
        debug_assert!(indices.last().is_none_or(|&i| i < bound));
        IndexList { indices, bound }
    }

    pub fn bound(&self) -> usize {
        self.bound
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.indices
    }

    pub fn contains(&self, index: usize) -> bool {
        self.indices.binary_search(&index).is_ok()
    }
}

impl Deref for IndexList {
    type Target = [usize];

    fn deref(&self) -> &[usize] {
        &self.indices
    }
}

/// Softmax of `x / temperature`, computed with max-subtraction.
pub fn stable_softmax<T: Scalar>(x: &[T], temperature: T) -> Result<Vector<T>> {
    if x.is_empty() {
        return Err(SparqError::EmptyLogits);
    }
    if temperature.partial_cmp(&T::zero()) != Some(std::cmp::Ordering::Greater) || !temperature.is_finite() {
        return Err(SparqError::BadTemperature(temperature.to_f64_lossless()));
    }
    let max = x.iter().copied().fold(T::neg_infinity(), T::max);
    let mut out: Vec<T> = x.iter().map(|&v| ((v - max) / temperature).exp()).collect();
    let mut sum = T::zero();
    for &e in &out {
        sum += e;
    }
    for e in &mut out {
        *e /= sum;
    }
    Ok(Vector::from_raw(out))
}

/// Descending by value, ascending by index on ties.
fn rank_order<T: Scalar>(x: &[T]) -> impl Fn(&usize, &usize) -> Ordering + '_ {
    move |&a, &b| {
        x[b].partial_cmp(&x[a])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    }
}

/// Indices of the `k` largest entries of `x`, sorted ascending.
///
/// Ties are broken in favour of the smaller index. `k` larger than `x.len()`
/// is clamped, which shows up only as a shorter result.
pub fn argtopk<T: Scalar>(x: &[T], k: usize) -> IndexList {
    let n = x.len();
    let k = k.min(n);
    if k == n {
        return IndexList::full(n);
    }
    let mut order: Vec<usize> = (0..n).collect();
    if k > 0 {
        let cmp = rank_order(x);
        order.select_nth_unstable_by(k - 1, &cmp);
    }
    order.truncate(k);
    order.sort_unstable();
    IndexList::from_sorted_unchecked(order, n)
}

/// Copies the selected rows, in index order.
pub fn gather_rows<T: Scalar>(m: &Matrix<T>, idx: &[usize]) -> Result<Matrix<T>> {
    let mut out = Vec::with_capacity(idx.len() * m.cols);
    for &i in idx {
        if i >= m.rows {
            return Err(SparqError::IndexOutOfRange {
                index: i,
                bound: m.rows,
            });
        }
        out.extend_from_slice(m.row(i));
    }
    Ok(Matrix::from_raw(idx.len(), m.cols, out))
}

/// Inner product with ascending accumulation order.
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

/// `m · x`: one inner product per row of `m`.
pub fn matvec<T: Scalar>(m: &Matrix<T>, x: &[T]) -> Result<Vector<T>> {
    if x.len() != m.cols {
        return Err(SparqError::shape("matvec operand", m.cols, x.len()));
    }
    Ok(Vector::from_raw(
        (0..m.rows).map(|i| dot(m.row(i), x)).collect(),
    ))
}

/// `x · m`: weighted sum of the rows of `m`, accumulated row by row.
pub fn vecmat<T: Scalar>(x: &[T], m: &Matrix<T>) -> Result<Vector<T>> {
    if x.len() != m.rows {
        return Err(SparqError::shape("vecmat operand", m.rows, x.len()));
    }
    let mut out = vec![T::zero(); m.cols];
    for (i, &w) in x.iter().enumerate() {
        axpy(w, m.row(i), &mut out);
    }
    Ok(Vector::from_raw(out))
}

/// `acc += w * row`.
pub(crate) fn axpy<T: Scalar>(w: T, row: &[T], acc: &mut [T]) {
    for (a, &r) in acc.iter_mut().zip(row) {
        *a += w * r;
    }
}
