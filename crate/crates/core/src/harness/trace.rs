//! Binary tensor trace format.
//!
//! Layout, little-endian throughout:
//!
//! ```text
//! magic    8 bytes  "SPQTRACE"
//! version  u32
//! entries  repeated until end of file:
//!   name_len  u32
//!   name      name_len bytes, UTF-8
//!   rank      u32
//!   dims      u64 × rank
//!   dtype     u8   (0 = f32, 1 = f64)
//!   payload   product(dims) × width bytes, row-major
//! ```
//!
//! A cache head is stored as tensors `K` and `V` (`S × d_h`) and `q`
//! (`d_h` or `g × d_h`).

use std::path::Path;

use crate::error::{Result, SparqError};
use crate::harness::synth::Workload;
use crate::kvcache::KvCacheHead;

pub const MAGIC: &[u8; 8] = b"SPQTRACE";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DType {
    F32,
    F64,
}

impl DType {
    pub fn code(self) -> u8 {
        match self {
            DType::F32 => 0,
            DType::F64 => 1,
        }
    }

    pub fn width(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::F64 => 8,
        }
    }

    fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(DType::F32),
            1 => Some(DType::F64),
            _ => None,
        }
    }
}

/// A named tensor. Values are held widened to `f64`; `dtype` is the storage
/// type on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceTensor {
    pub name: String,
    pub dims: Vec<u64>,
    pub dtype: DType,
    pub data: Vec<f64>,
}

impl TraceTensor {
    pub fn new(name: impl Into<String>, dims: Vec<u64>, dtype: DType, data: Vec<f64>) -> Result<Self> {
        let name = name.into();
        let n = element_count(&dims).ok_or_else(|| SparqError::TraceShape(format!("{name}: dims overflow")))?;
        if n != data.len() as u64 {
            return Err(SparqError::TraceShape(format!(
                "{name}: dims {dims:?} need {n} values, got {}",
                data.len()
            )));
        }
        Ok(TraceTensor {
            name,
            dims,
            dtype,
            data,
        })
    }
}

fn element_count(dims: &[u64]) -> Option<u64> {
    dims.iter().try_fold(1u64, |acc, &d| acc.checked_mul(d))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceFile {
    pub version: u32,
    pub entries: Vec<TraceTensor>,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let remaining = self.bytes.len() - self.pos;
        if remaining < n {
            return Err(SparqError::TraceParse {
                offset: self.pos,
                reason: format!("truncated {what}: need {n} bytes, {remaining} left"),
            });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn at_end(&self) -> bool {
        self.pos == self.bytes.len()
    }

    fn error(&self, offset: usize, reason: impl Into<String>) -> SparqError {
        SparqError::TraceParse {
            offset,
            reason: reason.into(),
        }
    }
}

impl TraceFile {
    pub fn new(entries: Vec<TraceTensor>) -> Self {
        TraceFile {
            version: VERSION,
            entries,
        }
    }

    pub fn get(&self, name: &str) -> Option<&TraceTensor> {
        self.entries.iter().find(|t| t.name == name)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&self.version.to_le_bytes());
        for t in &self.entries {
            out.extend_from_slice(&(t.name.len() as u32).to_le_bytes());
            out.extend_from_slice(t.name.as_bytes());
            out.extend_from_slice(&(t.dims.len() as u32).to_le_bytes());
            for &d in &t.dims {
                out.extend_from_slice(&d.to_le_bytes());
            }
            out.push(t.dtype.code());
            match t.dtype {
                DType::F32 => t
                    .data
                    .iter()
                    .for_each(|&v| out.extend_from_slice(&(v as f32).to_le_bytes())),
                DType::F64 => t.data.iter().for_each(|&v| out.extend_from_slice(&v.to_le_bytes())),
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8, "magic")? != MAGIC {
            return Err(r.error(0, "bad magic, expected SPQTRACE"));
        }
        let version_at = r.pos;
        let version = r.u32("version")?;
        if version != VERSION {
            return Err(r.error(version_at, format!("unsupported version {version}")));
        }
        let mut entries = Vec::new();
        while !r.at_end() {
            let entry_at = r.pos;
            let name_len = r.u32("name length")? as usize;
            let name_bytes = r.take(name_len, "name")?;
            let name = std::str::from_utf8(name_bytes)
                .map_err(|_| r.error(entry_at + 4, "name is not UTF-8"))?
                .to_string();
            let rank = r.u32("rank")? as usize;
            let mut dims = Vec::with_capacity(rank.min(16));
            for _ in 0..rank {
                dims.push(r.u64("dimension")?);
            }
            let dtype_at = r.pos;
            let code = r.u8("dtype")?;
            let dtype = DType::from_code(code)
                .ok_or_else(|| r.error(dtype_at, format!("unknown dtype code {code}")))?;
            let payload_at = r.pos;
            let n = element_count(&dims)
                .and_then(|n| usize::try_from(n).ok())
                .and_then(|n| n.checked_mul(dtype.width()))
                .ok_or_else(|| r.error(payload_at, format!("{name}: payload size overflows")))?;
            let payload = r.take(n, "payload")?;
            let data = match dtype {
                DType::F32 => payload
                    .chunks_exact(4)
                    .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
                    .collect(),
                DType::F64 => payload
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            };
            entries.push(TraceTensor {
                name,
                dims,
                dtype,
                data,
            });
        }
        Ok(TraceFile { version, entries })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    /// Stores the cache's keys and values plus the query group.
    pub fn from_workload(workload: &Workload, dtype: DType) -> Result<Self> {
        let cache = &workload.cache;
        let (s, d) = (cache.len() as u64, cache.head_dim() as u64);
        let g = workload.queries.len() as u64;
        let q: Vec<f64> = workload.queries.concat();
        Ok(TraceFile::new(vec![
            TraceTensor::new("q", vec![g, d], dtype, q)?,
            TraceTensor::new("K", vec![s, d], dtype, cache.keys_seq_major().values().to_vec())?,
            TraceTensor::new("V", vec![s, d], dtype, cache.values().values().to_vec())?,
        ]))
    }

    /// Rebuilds the cache and query group stored by [`Self::from_workload`].
    pub fn to_workload(&self) -> Result<Workload> {
        let need = |name: &str| {
            self.get(name)
                .ok_or_else(|| SparqError::TraceShape(format!("tensor `{name}` missing")))
        };
        let (q, k, v) = (need("q")?, need("K")?, need("V")?);
        if k.dims.len() != 2 {
            return Err(SparqError::TraceShape(format!("K must be rank 2, got dims {:?}", k.dims)));
        }
        if v.dims != k.dims {
            return Err(SparqError::TraceShape(format!(
                "V dims {:?} differ from K dims {:?}",
                v.dims, k.dims
            )));
        }
        let d = k.dims[1] as usize;
        let (g, qd) = match q.dims.as_slice() {
            [qd] => (1, *qd as usize),
            [g, qd] => (*g as usize, *qd as usize),
            other => return Err(SparqError::TraceShape(format!("q must be rank 1 or 2, got {other:?}"))),
        };
        if qd != d {
            return Err(SparqError::TraceShape(format!("q width {qd} differs from head dim {d}")));
        }
        if g == 0 || d == 0 || k.dims[0] == 0 {
            return Err(SparqError::TraceShape("empty q, K or V".into()));
        }
        let mut cache = KvCacheHead::new(d)?;
        for (kr, vr) in k.data.chunks_exact(d).zip(v.data.chunks_exact(d)) {
            cache.push(kr, vr).map_err(|e| SparqError::TraceShape(e.to_string()))?;
        }
        let queries = q.data.chunks_exact(d).map(|c| c.to_vec()).collect();
        Ok(Workload { queries, cache })
    }
}
