//! Arithmetic-intensity model of one transformer layer during batched
//! autoregressive decoding.
//!
//! With `N` parameters, `C` KV-cache elements per batch item, batch `B` and
//! `g` query heads per KV head, one step performs `A = B·N + B·C·g`
//! multiply-adds and transfers `M = N + B·C` elements.

use serde::Serialize;

use crate::error::{Result, SparqError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModelShape {
    pub d_model: f64,
    pub seq_len: f64,
    pub batch: f64,
    pub gqa: f64,
    /// Parameter count; `12·d_m²` unless overridden.
    pub params: f64,
    /// KV elements per batch item; `2·S·d_m/g` unless overridden.
    pub kv_elements: f64,
}

impl ModelShape {
    pub fn new(d_model: u64, seq_len: u64, batch: u64, gqa: u64) -> Result<Self> {
        if d_model == 0 || seq_len == 0 || batch == 0 || gqa == 0 {
            return Err(SparqError::InvalidConfig(
                "model shape dimensions must be positive".into(),
            ));
        }
        let (d, s, g) = (d_model as f64, seq_len as f64, gqa as f64);
        Ok(ModelShape {
            d_model: d,
            seq_len: s,
            batch: batch as f64,
            gqa: g,
            params: 12.0 * d * d,
            kv_elements: 2.0 * s * d / g,
        })
    }

    /// Batch size as a float, for limits such as `B = 1e9`.
    pub fn with_batch(mut self, batch: f64) -> Self {
        self.batch = batch;
        self
    }

    pub fn with_params(mut self, n: f64) -> Self {
        self.params = n;
        self
    }

    pub fn with_kv_elements(mut self, c: f64) -> Self {
        self.kv_elements = c;
        self
    }

    /// `ρ = S / (g·d_m)`.
    pub fn rho(&self) -> f64 {
        self.seq_len / (self.gqa * self.d_model)
    }

    pub fn arithmetic_ops(&self) -> f64 {
        self.batch * self.params + self.batch * self.kv_elements * self.gqa
    }

    pub fn transfers(&self) -> f64 {
        self.params + self.batch * self.kv_elements
    }
}

/// Share of data transfers spent on the KV cache, `ρ / (ρ + 6/B)` for the
/// default `N` and `C`.
pub fn attention_transfer_fraction(shape: &ModelShape) -> f64 {
    let attn = shape.batch * shape.kv_elements;
    attn / (attn + shape.params)
}

/// `A/M = (N + C·g) / (N/B + C)`, which is `(6 + ρ·g) / (6/B + ρ)` by default.
pub fn arithmetic_intensity(shape: &ModelShape) -> f64 {
    (shape.params + shape.kv_elements * shape.gqa) / (shape.params / shape.batch + shape.kv_elements)
}

/// Large-batch limit of [`arithmetic_intensity`]: `N/C + g`, i.e. `g + 6/ρ`.
pub fn max_intensity(shape: &ModelShape) -> f64 {
    shape.params / shape.kv_elements + shape.gqa
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HardwareSpec {
    pub name: String,
    /// Multiply-adds per second.
    pub r_a: f64,
    /// Elements transferred per second.
    pub r_m: f64,
}

impl HardwareSpec {
    pub fn new(name: impl Into<String>, r_a: f64, r_m: f64) -> Result<Self> {
        if !(r_a > 0.0 && r_m > 0.0 && r_a.is_finite() && r_m.is_finite()) {
            return Err(SparqError::InvalidConfig("hardware rates must be positive".into()));
        }
        Ok(HardwareSpec {
            name: name.into(),
            r_a,
            r_m,
        })
    }

    pub fn machine_balance(&self) -> f64 {
        self.r_a / self.r_m
    }

    pub fn bow_ipu() -> Self {
        HardwareSpec {
            name: "Bow IPU (FP16, SRAM)".into(),
            r_a: 175e12,
            r_m: 5.5e12,
        }
    }

    pub fn a10() -> Self {
        HardwareSpec {
            name: "A10 GPU (INT8, GDDR)".into(),
            r_a: 125e12,
            r_m: 0.6e12,
        }
    }

    pub fn h100_sxm() -> Self {
        HardwareSpec {
            name: "H100 SXM GPU (FP8, HBM)".into(),
            r_a: 990e12,
            r_m: 3.35e12,
        }
    }

    pub fn presets() -> Vec<Self> {
        vec![Self::bow_ipu(), Self::a10(), Self::h100_sxm()]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub intensity: f64,
    pub machine_balance: f64,
    /// Strictly below the machine balance. Equality counts as compute bound.
    pub is_bandwidth_bound: bool,
    pub time_lower_bound_s: f64,
}

/// Execution time lower bound with compute and transfer fully overlapped.
pub fn time_lower_bound(ops: f64, transfers: f64, hw: &HardwareSpec) -> f64 {
    (ops / hw.r_a).max(transfers / hw.r_m)
}

pub fn classify(intensity: f64, ops: f64, transfers: f64, hw: &HardwareSpec) -> BoundReport {
    let balance = hw.machine_balance();
    BoundReport {
        intensity,
        machine_balance: balance,
        is_bandwidth_bound: intensity < balance,
        time_lower_bound_s: time_lower_bound(ops, transfers, hw),
    }
}

pub fn bandwidth_bound(shape: &ModelShape, hw: &HardwareSpec) -> BoundReport {
    classify(
        arithmetic_intensity(shape),
        shape.arithmetic_ops(),
        shape.transfers(),
        hw,
    )
}

/// The three reference shapes `(name, g, d_m, S)` used for the roofline table.
pub fn reference_shapes() -> Vec<(&'static str, u64, u64, u64)> {
    vec![
        ("Llama 2 7B", 1, 4096, 4096),
        ("Llama 2 70B", 8, 8192, 4096),
        ("Llama 2 70B", 8, 8192, 16384),
    ]
}
