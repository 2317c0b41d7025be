//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use serde_json::Value;
use sparq_core::costmodel::{analytic_transfers, Method, TransferParams};
use sparq_core::harness::{decode_step, run_agreement, synth_workload, AgreementSpec, MethodParams, Tail};
use sparq_core::{
    dense_attention, flexgen_attention, h2o_attention, lm_infinite_attention, sparq_attention,
    sparq_attention_gqa, sparq_step1, AttentionHeadConfig, H2oState64, KvCacheHead64, TransferLedger,
};

type Outcome = Result<String, String>;
type Check = (&'static str, fn() -> Outcome);

fn sparq_bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sparq"))
}

fn run_cli(args: &[&str]) -> Result<String, String> {
    let out = sparq_bin().args(args).output().map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!(
            "sparq {} exited {:?}: {}",
            args.join(" "),
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    String::from_utf8(out.stdout).map_err(|e| e.to_string())
}

fn normal(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

fn student(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let t = StudentT::new(3.0).unwrap();
    (0..n).map(|_| t.sample(rng)).collect()
}

fn cache(rng: &mut ChaCha8Rng, s: usize, d: usize) -> KvCacheHead64 {
    let mut c = KvCacheHead64::new(d).unwrap();
    for _ in 0..s {
        let (k, v) = (normal(rng, d), normal(rng, d));
        c.push(&k, &v).unwrap();
    }
    c
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    if den == 0.0 {
        num.sqrt()
    } else {
        (num / den).sqrt()
    }
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn exact_limit() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for i in 0..1000 {
        let s = rng.random_range(1..=64);
        let d = rng.random_range(1..=32);
        let g = [1, 2, 4][i % 3];
        let c = cache(&mut rng, s, d);
        let qs: Vec<Vec<f64>> = (0..g).map(|_| student(&mut rng, d)).collect();
        let cfg = AttentionHeadConfig::new(d, g, d, s, 0).map_err(|e| e.to_string())?;
        let out = sparq_attention_gqa(&qs, &c, &cfg).map_err(|e| e.to_string())?;
        for (h, q) in out.heads.iter().zip(&qs) {
            let dense = dense_attention(q, &c).map_err(|e| e.to_string())?;
            worst = worst.max(rel_err(&h.y, &dense.y));
        }
    }
    let elapsed = start.elapsed();
    let msg = format!("1000 instances, max rel error {worst:.2e}, {elapsed:.2?}");
    if worst < 1e-9 && elapsed < Duration::from_secs(10) {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn cost_report() -> Result<Value, String> {
    let text = run_cli(&["cost", "--format", "json"])?;
    serde_json::from_str(&text).map_err(|e| e.to_string())
}

fn theoretical_speedup() -> Outcome {
    let report = cost_report()?;
    let rows = report["rows"].as_array().ok_or("no rows")?;
    let find = |s: u64| {
        rows.iter()
            .find(|r| r["method"] == "sparq" && r["seq_len"] == s && r["rank"] == 32 && r["topk"] == 128)
            .and_then(|r| r["theoretical_speedup"].as_f64())
            .ok_or(format!("no sparq row for S={s}"))
    };
    let (a, b) = (find(4096)?, find(16384)?);
    let msg = format!("S=4096 -> {a:.4} (6.38 +/- 0.01), S=16384 -> {b:.4} (7.52 +/- 0.02)");
    if (a - 6.38).abs() <= 0.01 && (b - 7.52).abs() <= 0.02 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn intensity_table() -> Outcome {
    let report = cost_report()?;
    let rows = report["roofline"].as_array().ok_or("no roofline rows")?;
    let got: Vec<(u64, u64, u64, f64)> = rows
        .iter()
        .map(|r| {
            (
                r["gqa"].as_u64().unwrap_or(0),
                r["d_model"].as_u64().unwrap_or(0),
                r["seq_len"].as_u64().unwrap_or(0),
                r["max_intensity"].as_f64().unwrap_or(f64::NAN),
            )
        })
        .collect();
    let want = [(1, 4096, 4096, 7.0), (8, 8192, 4096, 104.0), (8, 8192, 16384, 32.0)];
    let msg = format!("max A/M {:?}", got.iter().map(|g| g.3).collect::<Vec<_>>());
    if got.len() == 3 && got.iter().zip(want).all(|(g, w)| (g.0, g.1, g.2) == (w.0, w.1, w.2) && g.3 == w.3) {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn ledger_reconciliation() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut checked = 0;
    for method in Method::ALL {
        for _ in 0..1000 {
            let s = rng.random_range(1..=64);
            let d = rng.random_range(1..=16);
            let r = rng.random_range(1..=d + 2);
            let k = rng.random_range(17..=80);
            let realloc = match rng.random_range(0..3) {
                0 => None,
                1 => Some(true),
                _ => Some(false),
            };
            let w = synth_workload(s, d, 1, Tail::Heavy, rng.random()).map_err(|e| e.to_string())?;
            let params = MethodParams::new(r, k).reallocate_mean(realloc);
            let out = decode_step(method, &params, &w).map_err(|e| format!("{method}: {e}"))?;
            let on = method == Method::Sparq && realloc.unwrap_or(true);
            let mut p = TransferParams::new(s as u64, d as u64).reallocate_mean(on).topk(k as u64);
            if method == Method::Sparq {
                p = p.rank(r as u64);
            }
            let expected = analytic_transfers(method, &p).map_err(|e| e.to_string())?;
            if out.ledger.modeled_total() != expected {
                return Err(format!(
                    "{method} S={s} d={d} r={r} k={k}: counted {} expected {expected}",
                    out.ledger.modeled_total()
                ));
            }
            checked += 1;
        }
    }
    let elapsed = start.elapsed();
    let msg = format!("{checked} tuples across 5 methods exact, {elapsed:.2?}");
    if elapsed < Duration::from_secs(30) {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn budget_covers_sequence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let s = rng.random_range(17..=64);
        let d = rng.random_range(1..=16);
        let k = s + rng.random_range(0..8);
        let r = rng.random_range(1..=d);
        let c = cache(&mut rng, s, d);
        let q = student(&mut rng, d);
        let dense = dense_attention(&q, &c).map_err(|e| e.to_string())?.y;
        let cfg = AttentionHeadConfig::new(d, 1, r, k, k / 4).map_err(|e| e.to_string())?;
        let sparq = sparq_attention(&q, &c, &cfg).map_err(|e| e.to_string())?.y;
        let flex = flexgen_attention(&q, &c, k, false).map_err(|e| e.to_string())?.y;
        let lm = lm_infinite_attention(&q, &c, k).map_err(|e| e.to_string())?.y;
        let mut state = H2oState64::with_quarter_local(k).map_err(|e| e.to_string())?;
        let history: Vec<Vec<f64>> = (0..s).map(|p| c.key(p).to_vec()).collect();
        state.warm_up(&c, &history).map_err(|e| e.to_string())?;
        let h2o = h2o_attention(&q, &mut state, &c).map_err(|e| e.to_string())?.y;
        for y in [&sparq, &flex, &lm, &h2o] {
            worst = worst.max(max_diff(y, &dense));
        }
    }
    let msg = format!("200 instances x 4 methods, max abs diff {worst:.2e}");
    if worst < 1e-12 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn agreement_properties() -> Outcome {
    let report = run_agreement(&AgreementSpec {
        seq_len: 512,
        head_dim: 64,
        ranks: vec![8, 16, 32, 64],
        topk: 32,
        trials: 200,
        seed: 6,
        tail: Tail::Heavy,
    })
    .map_err(|e| e.to_string())?;
    let top: Vec<f64> = report.rows.iter().map(|r| r.topr_agreement).collect();
    let margin = report.rows[1].topr_agreement - report.rows[1].random_agreement;
    let monotone = top.windows(2).all(|w| w[0] <= w[1]);
    let msg = format!(
        "top-r {:?}, random r=16 {:.4}, margin {margin:.4}, kurtosis {:.2}",
        top.iter().map(|v| (v * 1e4).round() / 1e4).collect::<Vec<_>>(),
        report.rows[1].random_agreement,
        report.query_kurtosis
    );
    if monotone && top[3] == 1.0 && margin > 0.05 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn temperature_checks() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let c = cache(&mut rng, 8, 64);
    let tau = |q: &[f64], r: usize| -> Result<f64, String> {
        let cfg = AttentionHeadConfig::new(64, 1, r, 8, 0).map_err(|e| e.to_string())?;
        Ok(sparq_step1(q, &c, &cfg, &mut TransferLedger::new()).map_err(|e| e.to_string())?.tau)
    };
    let mut errs = Vec::new();
    for _ in 0..50 {
        let q = student(&mut rng, 64);
        errs.push((tau(&q, 64)? - 8.0).abs());
        let r = rng.random_range(1..=64);
        let mut sparse = vec![0.0; 64];
        for i in rand::seq::index::sample(&mut rng, 64, r) {
            sparse[i] = student(&mut rng, 1)[0];
        }
        errs.push((tau(&sparse, r)? - 8.0).abs());
        let m: f64 = rng.random_range(0.1..10.0);
        let uniform: Vec<f64> = (0..64).map(|_| if rng.random() { m } else { -m }).collect();
        errs.push((tau(&uniform, r)? - (r as f64).sqrt()).abs());
    }
    let worst = errs.iter().cloned().fold(0.0, f64::max);
    let msg = format!("{} checks, max error {worst:.2e}", errs.len());
    if worst < 1e-12 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn determinism() -> Outcome {
    let args = [
        "bench", "--seq-len", "128,256", "--head-dim", "32", "--topk", "32", "--rank", "4,8", "--trials", "3",
        "--seed", "42", "--format", "csv",
    ];
    let a = run_cli(&args)?;
    let b = run_cli(&args)?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("bench.csv");
    let mut with_out = args.to_vec();
    let p = path.to_string_lossy().to_string();
    with_out.extend(["--out", &p]);
    run_cli(&with_out)?;
    let c = std::fs::read_to_string(&path).map_err(|e| e.to_string())?;
    let msg = format!("{} CSV lines, {} bytes", a.lines().count(), a.len());
    if a == b && a == c && a.lines().count() > 1 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

/// The three steps written out as one function, the local window as a
/// literal `+1` mask on the approximate scores.
fn algorithm_one(q: &[f64], c: &KvCacheHead64, r: usize, k: usize, l: usize) -> Vec<f64> {
    let (s, d) = (c.len(), q.len());
    let order = |x: &[f64], n: usize| -> Vec<usize> {
        let mut idx: Vec<usize> = (0..x.len()).collect();
        idx.sort_by(|&a, &b| x[b].partial_cmp(&x[a]).unwrap().then(a.cmp(&b)));
        idx.truncate(n);
        idx.sort_unstable();
        idx
    };
    let softmax = |x: &[f64]| -> Vec<f64> {
        let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = x.iter().map(|v| (v - m).exp()).collect();
        let z: f64 = e.iter().sum();
        e.iter().map(|v| v / z).collect()
    };
    let absq: Vec<f64> = q.iter().map(|v| v.abs()).collect();
    let i1 = order(&absq, r);
    let tau = (d as f64 * i1.iter().map(|&i| absq[i]).sum::<f64>() / absq.iter().sum::<f64>()).sqrt();
    let approx: Vec<f64> = (0..s)
        .map(|p| i1.iter().map(|&i| q[i] * c.key(p)[i]).sum::<f64>() / tau)
        .collect();
    let s_hat = softmax(&approx);
    let boosted: Vec<f64> = (0..s).map(|p| s_hat[p] + if p + l >= s { 1.0 } else { 0.0 }).collect();
    let i2 = order(&boosted, k);
    let alpha: f64 = i2.iter().map(|&p| s_hat[p]).sum();
    let exact: Vec<f64> = i2
        .iter()
        .map(|&p| q.iter().zip(c.key(p)).map(|(a, b)| a * b).sum::<f64>() / (d as f64).sqrt())
        .collect();
    let w = softmax(&exact);
    let mut mean = vec![0.0; d];
    for p in 0..s {
        for (m, v) in mean.iter_mut().zip(c.value(p)) {
            *m += v / s as f64;
        }
    }
    let mut y = vec![0.0; d];
    for (wp, &p) in w.iter().zip(&i2) {
        for (o, v) in y.iter_mut().zip(c.value(p)) {
            *o += wp * v;
        }
    }
    y.iter().zip(&mean).map(|(a, m)| alpha * a + (1.0 - alpha) * m).collect()
}

fn oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst: f64 = 0.0;
    for _ in 0..500 {
        let s = rng.random_range(1..=64);
        let d = rng.random_range(1..=32);
        let r = rng.random_range(1..=d);
        let k = rng.random_range(1..=s);
        let l = rng.random_range(0..=k);
        let c = cache(&mut rng, s, d);
        let q = student(&mut rng, d);
        let cfg = AttentionHeadConfig::new(d, 1, r, k, l).map_err(|e| e.to_string())?;
        let out = sparq_attention(&q, &c, &cfg).map_err(|e| e.to_string())?;
        worst = worst.max(max_diff(&out.y, &algorithm_one(&q, &c, r, k, l)));

        // component mask materialised over every entry of q
        let mask: Vec<f64> = (0..d).map(|i| if out.approx.i1.contains(i) { 1.0 } else { 0.0 }).collect();
        let logits: Vec<f64> = (0..s)
            .map(|p| (0..d).map(|i| q[i] * mask[i] * c.key(p)[i]).sum::<f64>() / out.approx.tau)
            .collect();
        let mx = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = logits.iter().map(|v| (v - mx).exp()).sum();
        let s_hat: Vec<f64> = logits.iter().map(|v| (v - mx).exp() / z).collect();
        worst = worst.max(max_diff(&out.approx.s_hat, &s_hat));

        // position mask through log(m + eps)
        let logits: Vec<f64> = (0..s)
            .map(|p| {
                let m = if out.selection.i2.contains(p) { 1.0 } else { 0.0 };
                q.iter().zip(c.key(p)).map(|(a, b)| a * b).sum::<f64>() / (d as f64).sqrt() + (m + 1e-300f64).ln()
            })
            .collect();
        let mx = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = logits.iter().map(|v| (v - mx).exp()).sum();
        let sel: Vec<f64> = out.selection.i2.iter().map(|&p| (logits[p] - mx).exp() / z).collect();
        worst = worst.max(max_diff(&out.selection.s_exact, &sel));
    }
    let msg = format!("500 instances, max abs diff {worst:.2e}");
    if worst < 1e-12 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn main() {
    let criteria: [Check; 9] = [
        ("exact-limit equivalence", exact_limit),
        ("theoretical speedup", theoretical_speedup),
        ("arithmetic-intensity table", intensity_table),
        ("ledger-formula reconciliation", ledger_reconciliation),
        ("budget covers sequence", budget_covers_sequence),
        ("agreement properties", agreement_properties),
        ("temperature formula", temperature_checks),
        ("determinism", determinism),
        ("oracle equivalence", oracle_equivalence),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("PASS  {}. {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {}. {name}: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
