use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SparqError};
use crate::kvcache::KvCacheHead;

/// Distribution of the synthetic query components.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Tail {
    /// Standard normal.
    Gaussian,
    /// Student-t with 3 degrees of freedom.
    Heavy,
}

impl fmt::Display for Tail {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Tail::Gaussian => "gaussian",
            Tail::Heavy => "heavy",
        })
    }
}

impl FromStr for Tail {
    type Err = SparqError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" | "normal" => Ok(Tail::Gaussian),
            "heavy" | "student-t" => Ok(Tail::Heavy),
            other => Err(SparqError::InvalidConfig(format!("unknown tail `{other}`"))),
        }
    }
}

pub const HEAVY_TAIL_DOF: f64 = 3.0;

/// A decoding step's worth of data: `g` queries against a cache of `S`
/// positions.
#[derive(Debug, Clone)]
pub struct Workload {
    pub queries: Vec<Vec<f64>>,
    pub cache: KvCacheHead<f64>,
}

/// Deterministic workload: keys and values standard normal, queries drawn
/// from `tail`. Queries are drawn after the cache so the cache for a seed
/// does not depend on `gqa`.
pub fn synth_workload(seq_len: usize, head_dim: usize, gqa: usize, tail: Tail, seed: u64) -> Result<Workload> {
    if seq_len == 0 || head_dim == 0 || gqa == 0 {
        return Err(SparqError::InvalidConfig(
            "synthetic workload needs positive seq_len, head_dim and gqa".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cache = KvCacheHead::new(head_dim)?;
    let mut key = vec![0.0; head_dim];
    let mut value = vec![0.0; head_dim];
    for _ in 0..seq_len {
        key.iter_mut().for_each(|x| *x = StandardNormal.sample(&mut rng));
        value.iter_mut().for_each(|x| *x = StandardNormal.sample(&mut rng));
        cache.push(&key, &value)?;
    }
    let queries = (0..gqa).map(|_| draw_query(&mut rng, head_dim, tail)).collect();
    Ok(Workload { queries, cache })
}

pub(crate) fn draw_query(rng: &mut ChaCha8Rng, head_dim: usize, tail: Tail) -> Vec<f64> {
    match tail {
        Tail::Gaussian => (0..head_dim).map(|_| StandardNormal.sample(rng)).collect(),
        Tail::Heavy => {
            let t = StudentT::new(HEAVY_TAIL_DOF).expect("valid degrees of freedom");
            (0..head_dim).map(|_| t.sample(rng)).collect()
        }
    }
}
