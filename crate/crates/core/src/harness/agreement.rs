//! Top-k agreement of approximate scores, top-r components against random-r.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attention::{dense_scores, sparq_step1, AttentionHeadConfig};
use crate::costmodel::TransferLedger;
use crate::error::{Result, SparqError};
use crate::harness::metrics::{fisher_kurtosis, topk_agreement};
use crate::harness::report::{content_hash, render_table, to_csv, to_json, Format};
use crate::harness::sweep::mix_seed;
use crate::harness::synth::{synth_workload, Tail, Workload};
use crate::kvcache::KvCacheHead;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementSpec {
    pub seq_len: usize,
    pub head_dim: usize,
    pub ranks: Vec<usize>,
    pub topk: usize,
    pub trials: usize,
    pub seed: u64,
    pub tail: Tail,
}

impl Default for AgreementSpec {
    fn default() -> Self {
        AgreementSpec {
            seq_len: 512,
            head_dim: 64,
            ranks: vec![8, 16, 32, 64],
            topk: 32,
            trials: 200,
            seed: 0,
            tail: Tail::Heavy,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgreementRow {
    pub rank: usize,
    /// Components chosen by largest `|q_i|`.
    pub topr_agreement: f64,
    /// Components chosen uniformly at random.
    pub random_agreement: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgreementReport {
    pub spec_hash: String,
    pub topk: usize,
    pub samples: usize,
    /// Excess kurtosis of all query components pooled.
    pub query_kurtosis: f64,
    pub rows: Vec<AgreementRow>,
}

/// Scores from a random `r`-subset of query components. Only the ranking
/// matters for agreement, so the temperature and softmax are skipped.
pub fn random_component_scores(q: &[f64], cache: &KvCacheHead<f64>, rank: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let d = q.len();
    let mut comps = sample(rng, d, rank.min(d)).into_vec();
    comps.sort_unstable();
    let mut logits = vec![0.0; cache.len()];
    for &c in &comps {
        for (l, &k) in logits.iter_mut().zip(cache.key_component(c)) {
            *l += q[c] * k;
        }
    }
    logits
}

/// Mean agreement at each rank over every query of every workload.
pub fn agreement_over(workloads: &[Workload], ranks: &[usize], topk: usize, seed: u64) -> Result<(Vec<AgreementRow>, usize)> {
    if ranks.is_empty() || workloads.is_empty() {
        return Err(SparqError::InvalidConfig("agreement needs ranks and at least one workload".into()));
    }
    let mut rows = Vec::with_capacity(ranks.len());
    let mut samples = 0;
    for &rank in ranks {
        let (mut top, mut rand_sum, mut n) = (0.0, 0.0, 0usize);
        for (w, workload) in workloads.iter().enumerate() {
            let cache = &workload.cache;
            let cfg = AttentionHeadConfig::new(cache.head_dim(), 1, rank, topk.min(cache.len()).max(1), 0)?;
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, rank as u64, w as u64));
            for q in &workload.queries {
                let truth = dense_scores(q, cache)?;
                let approx = sparq_step1(q, cache, &cfg, &mut TransferLedger::new())?;
                top += topk_agreement(&truth, &approx.s_hat, topk)?;
                let random = random_component_scores(q, cache, cfg.rank, &mut rng);
                rand_sum += topk_agreement(&truth, &random, topk)?;
                n += 1;
            }
        }
        samples = n;
        rows.push(AgreementRow {
            rank,
            topr_agreement: top / n as f64,
            random_agreement: rand_sum / n as f64,
        });
    }
    Ok((rows, samples))
}

fn pooled_kurtosis(workloads: &[Workload]) -> Result<f64> {
    let pooled: Vec<f64> = workloads.iter().flat_map(|w| w.queries.iter().flatten().copied()).collect();
    fisher_kurtosis(&pooled)
}

pub fn run_agreement(spec: &AgreementSpec) -> Result<AgreementReport> {
    if spec.trials == 0 {
        return Err(SparqError::InvalidConfig("trials must be positive".into()));
    }
    if spec.topk == 0 || spec.topk > spec.seq_len {
        return Err(SparqError::InvalidConfig(format!(
            "topk {} must lie in 1..={}",
            spec.topk, spec.seq_len
        )));
    }
    let workloads = (0..spec.trials)
        .map(|t| synth_workload(spec.seq_len, spec.head_dim, 1, spec.tail, mix_seed(spec.seed, spec.seq_len as u64, t as u64)))
        .collect::<Result<Vec<_>>>()?;
    let (rows, samples) = agreement_over(&workloads, &spec.ranks, spec.topk, spec.seed)?;
    Ok(AgreementReport {
        spec_hash: content_hash(spec)?,
        topk: spec.topk,
        samples,
        query_kurtosis: pooled_kurtosis(&workloads)?,
        rows,
    })
}

/// Agreement over the queries stored in one captured workload.
pub fn run_agreement_on(workload: &Workload, ranks: &[usize], topk: usize, seed: u64) -> Result<AgreementReport> {
    if topk == 0 || topk > workload.cache.len() {
        return Err(SparqError::InvalidConfig(format!(
            "topk {topk} must lie in 1..={}",
            workload.cache.len()
        )));
    }
    let workloads = std::slice::from_ref(workload);
    let (rows, samples) = agreement_over(workloads, ranks, topk, seed)?;
    let kurtosis = pooled_kurtosis(workloads).unwrap_or(f64::NAN);
    Ok(AgreementReport {
        spec_hash: content_hash(&(ranks, topk, seed))?,
        topk,
        samples,
        query_kurtosis: kurtosis,
        rows,
    })
}

impl AgreementReport {
    pub fn render(&self, format: Format) -> Result<String> {
        match format {
            Format::Csv => to_csv(&self.rows),
            Format::Json => to_json(self),
            Format::Table => {
                let rows: Vec<Vec<String>> = self
                    .rows
                    .iter()
                    .map(|r| {
                        vec![
                            r.rank.to_string(),
                            format!("{:.4}", r.topr_agreement),
                            format!("{:.4}", r.random_agreement),
                        ]
                    })
                    .collect();
                let mut out = format!(
                    "spec_hash {}\nk {}  samples {}  query_kurtosis {:.3}\n",
                    self.spec_hash, self.topk, self.samples, self.query_kurtosis
                );
                out.push_str(&render_table(&["rank", "topr_agreement", "random_agreement"], &rows));
                Ok(out)
            }
        }
    }
}
