use serde::{Deserialize, Serialize};

use crate::error::{Result, SparqError};

/// Static shape and sparsity parameters for one KV head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttentionHeadConfig {
    pub head_dim: usize,
    /// Query heads sharing this KV head.
    pub gqa: usize,
    /// Query components used for approximate scores.
    pub rank: usize,
    /// Positions whose full keys and values are fetched.
    pub topk: usize,
    /// Most recent positions always fetched.
    pub local: usize,
    pub reallocate_mean: bool,
}

impl AttentionHeadConfig {
    /// Validates the parameters. A rank above `head_dim` is clamped with a
    /// warning. Mean reallocation defaults to on for `gqa == 1` and off
    /// otherwise.
    pub fn new(head_dim: usize, gqa: usize, rank: usize, topk: usize, local: usize) -> Result<Self> {
        if head_dim == 0 {
            return Err(SparqError::InvalidConfig("head_dim must be at least 1".into()));
        }
        if gqa == 0 {
            return Err(SparqError::InvalidConfig("gqa must be at least 1".into()));
        }
        if rank == 0 {
            return Err(SparqError::InvalidConfig("rank must be at least 1".into()));
        }
        if topk == 0 {
            return Err(SparqError::InvalidConfig("topk must be at least 1".into()));
        }
        if local > topk {
            return Err(SparqError::InvalidConfig(format!(
                "local window {local} exceeds topk {topk}"
            )));
        }
        let rank = if rank > head_dim {
            log::warn!("rank {rank} exceeds head_dim {head_dim}; clamping");
            head_dim
        } else {
            rank
        };
        Ok(AttentionHeadConfig {
            head_dim,
            gqa,
            rank,
            topk,
            local,
            reallocate_mean: gqa == 1,
        })
    }

    /// Full-fidelity settings: every component and every position.
    pub fn exact(head_dim: usize, gqa: usize, seq_len: usize) -> Result<Self> {
        Self::new(head_dim, gqa, head_dim, seq_len.max(1), 0)
    }

    pub fn with_reallocate_mean(mut self, on: bool) -> Self {
        self.reallocate_mean = on;
        self
    }

    pub fn effective_topk(&self, seq_len: usize) -> usize {
        self.topk.min(seq_len)
    }

    pub fn effective_local(&self, seq_len: usize) -> usize {
        self.local.min(self.effective_topk(seq_len))
    }
}
