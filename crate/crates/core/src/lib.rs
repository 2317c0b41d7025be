//! SparQ attention over an instrumented key-value cache, with the H2O,
//! LM-Infinite and FlexGen baselines, a transfer cost model and a small
//! experiment harness.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the
//! `*64` aliases below are the reference precision.

pub mod attention;
pub mod baselines;
pub mod costmodel;
pub mod error;
pub mod harness;
pub mod kvcache;
pub mod numkernel;
pub mod scalar;

pub use attention::{
    dense_attention, dense_attention_group, dense_scores, sparq_attention, sparq_attention_gqa, sparq_step1,
    sparq_step2, sparq_step3, ApproxScores, AttentionHeadConfig, AttentionOutput, SparqGroupOutput, SparqOutput,
    SparseSelection,
};
pub use baselines::{flexgen_attention, h2o_attention, lm_infinite_attention, lm_infinite_positions, H2oState};
pub use costmodel::{Category, Method, TransferLedger, TransferParams};
pub use error::{Result, SparqError};
pub use kvcache::{CacheStats, KeyLayout, KvCacheHead};
pub use numkernel::{argtopk, stable_softmax, IndexList, Matrix, Vector};
pub use scalar::Scalar;

pub type Vec64 = Vector<f64>;
pub type Mat64 = Matrix<f64>;
pub type KvCacheHead64 = KvCacheHead<f64>;
pub type AttentionOutput64 = AttentionOutput<f64>;
pub type SparqOutput64 = SparqOutput<f64>;
pub type H2oState64 = H2oState<f64>;

pub type Vec32 = Vector<f32>;
pub type Mat32 = Matrix<f32>;
pub type KvCacheHead32 = KvCacheHead<f32>;
