//! Per-head key/value store.
//!
//! Keys are held twice: position-major (one contiguous key vector per
//! position) for gathering whole keys of selected positions, and
//! component-major (one contiguous row per head-dimension component) for
//! gathering a few components across every position. The running mean of the
//! values is updated on every append.

use serde::Serialize;

use crate::costmodel::{Category, TransferLedger};
use crate::error::{Result, SparqError};
use crate::numkernel::Matrix;
use crate::scalar::Scalar;

/// How key storage is accounted for in the transfer ledger. Numerics are
/// identical in both modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum KeyLayout {
    /// Both layouts maintained; the second key write lands in
    /// [`Category::DualLayoutKey`].
    #[default]
    Dual,
    /// Only the position-major layout is assumed to exist; component reads
    /// are reported as strided.
    PositionMajorOnly,
}

#[derive(Debug, Clone)]
pub struct KvCacheHead<T> {
    head_dim: usize,
    len: usize,
    keys: Vec<T>,
    key_components: Vec<Vec<T>>,
    values: Vec<T>,
    mean: Vec<T>,
    layout: KeyLayout,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CacheStats {
    pub seq_len: usize,
    pub head_dim: usize,
    /// `3·S·d_h + d_h`: two key layouts, values and the mean vector.
    pub memory_elements: u64,
}

impl<T: Scalar> KvCacheHead<T> {
    pub fn new(head_dim: usize) -> Result<Self> {
        if head_dim == 0 {
            return Err(SparqError::InvalidConfig("head_dim must be positive".into()));
        }
        Ok(KvCacheHead {
            head_dim,
            len: 0,
            keys: Vec::new(),
            key_components: vec![Vec::new(); head_dim],
            values: Vec::new(),
            mean: vec![T::zero(); head_dim],
            layout: KeyLayout::Dual,
        })
    }

    pub fn with_layout(mut self, layout: KeyLayout) -> Self {
        self.layout = layout;
        self
    }

    /// Builds a cache by pushing the rows of `keys` and `values` in order.
    pub fn from_rows(keys: &Matrix<T>, values: &Matrix<T>) -> Result<Self> {
        if keys.rows() != values.rows() {
            return Err(SparqError::shape("value rows", keys.rows(), values.rows()));
        }
        if keys.cols() != values.cols() {
            return Err(SparqError::shape("value cols", keys.cols(), values.cols()));
        }
        let mut cache = Self::new(keys.cols())?;
        for i in 0..keys.rows() {
            cache.push(keys.row(i), values.row(i))?;
        }
        Ok(cache)
    }

    pub fn head_dim(&self) -> usize {
        self.head_dim
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn layout(&self) -> KeyLayout {
        self.layout
    }

    /// Appends one position without charging any ledger.
    pub fn push(&mut self, key: &[T], value: &[T]) -> Result<()> {
        if key.len() != self.head_dim {
            return Err(SparqError::shape("key", self.head_dim, key.len()));
        }
        if value.len() != self.head_dim {
            return Err(SparqError::shape("value", self.head_dim, value.len()));
        }
        if key.iter().chain(value).any(|v| !v.is_finite()) {
            return Err(SparqError::NonFinite("key/value"));
        }
        self.keys.extend_from_slice(key);
        for (component, &k) in self.key_components.iter_mut().zip(key) {
            component.push(k);
        }
        self.values.extend_from_slice(value);
        let old = T::from_count(self.len);
        let new = T::from_count(self.len + 1);
        for (m, &v) in self.mean.iter_mut().zip(value) {
            *m = (old * *m + v) / new;
        }
        self.len += 1;
        Ok(())
    }

    /// Appends one position and charges the write of `key` and `value`, the
    /// extra component-major key write, and (with `charge_mean`) the mean
    /// vector read and write-back.
    pub fn append(
        &mut self,
        key: &[T],
        value: &[T],
        ledger: &mut TransferLedger,
        charge_mean: bool,
    ) -> Result<()> {
        self.push(key, value)?;
        let d = self.head_dim as u64;
        ledger.write(Category::KvAppend, 2 * d);
        if self.layout == KeyLayout::Dual {
            ledger.write(Category::DualLayoutKey, d);
        }
        if charge_mean {
            ledger.read(Category::MeanVector, d);
            ledger.write(Category::MeanVector, d);
        }
        Ok(())
    }

    pub fn key(&self, pos: usize) -> &[T] {
        &self.keys[pos * self.head_dim..(pos + 1) * self.head_dim]
    }

    pub fn value(&self, pos: usize) -> &[T] {
        &self.values[pos * self.head_dim..(pos + 1) * self.head_dim]
    }

    /// Component `c` of every cached key, in position order.
    pub fn key_component(&self, c: usize) -> &[T] {
        &self.key_components[c]
    }

    pub fn mean_value(&self) -> &[T] {
        &self.mean
    }

    pub fn keys_seq_major(&self) -> Matrix<T> {
        Matrix::from_raw(self.len, self.head_dim, self.keys.clone())
    }

    pub fn keys_dim_major(&self) -> Matrix<T> {
        Matrix::from_raw(self.head_dim, self.len, self.key_components.concat())
    }

    pub fn values(&self) -> Matrix<T> {
        Matrix::from_raw(self.len, self.head_dim, self.values.clone())
    }

    pub fn snapshot_stats(&self) -> CacheStats {
        let (s, d) = (self.len as u64, self.head_dim as u64);
        CacheStats {
            seq_len: self.len,
            head_dim: self.head_dim,
            memory_elements: 3 * s * d + d,
        }
    }
}
