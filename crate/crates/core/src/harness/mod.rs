//! Workloads, metrics, sweeps, traces and report emission.

pub mod agreement;
pub mod cost;
pub mod metrics;
pub mod report;
pub mod step;
pub mod sweep;
pub mod synth;
pub mod trace;
pub mod trace_eval;

pub use agreement::{run_agreement, run_agreement_on, AgreementReport, AgreementRow, AgreementSpec};
pub use cost::{run_cost, CostReport, CostRow, CostSpec, HardwareRow, RooflineRow};
pub use metrics::{fisher_kurtosis, overlap, rel_l2_error, topk_agreement};
pub use report::{content_hash, render_table, Format};
pub use step::{decode_step, uses_mean_reallocation, LocalRule, MethodParams, StepOutcome};
pub use sweep::{mix_seed, run_sweep, SweepReport, SweepRow, SweepSpec, SWEEP_COLUMNS};
pub use synth::{synth_workload, Tail, Workload, HEAVY_TAIL_DOF};
pub use trace::{DType, TraceFile, TraceTensor};
pub use trace_eval::{eval_workload, trace_eval, TraceEvalReport};
