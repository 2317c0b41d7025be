use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sparq_core::harness::{
    run_agreement, run_agreement_on, run_cost, run_sweep, synth_workload, trace_eval, AgreementSpec, CostSpec,
    DType, Format, LocalRule, MethodParams, SweepSpec, Tail, TraceFile,
};
use sparq_core::{Method, SparqError};

#[derive(Parser)]
#[command(name = "sparq", version, about = "SparQ attention, baselines and transfer cost model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep methods and parameters over synthetic workloads.
    Bench(BenchArgs),
    /// Closed-form transfer counts and the roofline tables.
    Cost(CostArgs),
    /// Top-k agreement of top-r against random-r components.
    Agreement(AgreementArgs),
    /// Run methods over a captured trace.
    TraceEval(TraceEvalArgs),
    /// Write a synthetic workload as a trace file.
    GenTrace(GenTraceArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
    Table,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => Format::Csv,
            FormatArg::Json => Format::Json,
            FormatArg::Table => Format::Table,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum DTypeArg {
    F32,
    F64,
}

#[derive(Args)]
struct Output {
    #[arg(long, value_enum, default_value = "table")]
    format: FormatArg,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_value = "dense,sparq,h2o,lm-infinite,flexgen")]
    method: Vec<Method>,
    #[arg(long, value_delimiter = ',', default_value = "1024")]
    seq_len: Vec<usize>,
    #[arg(long, default_value_t = 128)]
    head_dim: usize,
    #[arg(long, default_value_t = 1)]
    gqa: usize,
    #[arg(long, value_delimiter = ',', default_value = "8,16,32,64")]
    rank: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "128")]
    topk: Vec<usize>,
    /// Local window: a count or `k/4`.
    #[arg(long, default_value = "k/4")]
    local: LocalRule,
    /// Disable mean-value reallocation in SparQ.
    #[arg(long)]
    no_realloc: bool,
    /// Renormalise FlexGen's weights over the selected positions.
    #[arg(long)]
    flexgen_renormalize: bool,
    #[arg(long, default_value_t = 4)]
    trials: usize,
    #[arg(long, default_value = "heavy")]
    tail: Tail,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct CostArgs {
    #[arg(long, value_delimiter = ',', default_value = "dense,sparq,h2o,lm-infinite,flexgen")]
    method: Vec<Method>,
    #[arg(long, value_delimiter = ',', default_value = "4096,16384")]
    seq_len: Vec<usize>,
    #[arg(long, default_value_t = 128)]
    head_dim: usize,
    #[arg(long, default_value_t = 32)]
    rank: usize,
    #[arg(long, default_value_t = 128)]
    topk: usize,
    #[arg(long)]
    no_realloc: bool,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct AgreementArgs {
    #[arg(long, default_value_t = 512)]
    seq_len: usize,
    #[arg(long, default_value_t = 64)]
    head_dim: usize,
    #[arg(long, value_delimiter = ',', default_value = "8,16,32,64")]
    rank: Vec<usize>,
    #[arg(long, default_value_t = 32)]
    topk: usize,
    #[arg(long, default_value_t = 200)]
    trials: usize,
    #[arg(long, default_value = "heavy")]
    tail: Tail,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Measure over the queries of this trace instead of synthetic data.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct TraceEvalArgs {
    #[arg(long)]
    trace: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "dense,sparq,h2o,lm-infinite,flexgen")]
    method: Vec<Method>,
    #[arg(long, default_value_t = 32)]
    rank: usize,
    #[arg(long, default_value_t = 128)]
    topk: usize,
    #[arg(long, default_value = "k/4")]
    local: LocalRule,
    #[arg(long)]
    no_realloc: bool,
    #[arg(long)]
    flexgen_renormalize: bool,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct GenTraceArgs {
    #[arg(long, default_value_t = 1024)]
    seq_len: usize,
    #[arg(long, default_value_t = 128)]
    head_dim: usize,
    #[arg(long, default_value_t = 1)]
    gqa: usize,
    #[arg(long, default_value = "heavy")]
    tail: Tail,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "f64")]
    dtype: DTypeArg,
    #[arg(long)]
    out: PathBuf,
}

fn realloc_flag(no_realloc: bool) -> Option<bool> {
    no_realloc.then_some(false)
}

fn emit(output: &Output, text: &str) -> Result<(), SparqError> {
    match &output.out {
        Some(path) => std::fs::write(path, text)?,
        None => std::io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn run(command: Command) -> Result<(), SparqError> {
    match command {
        Command::Bench(a) => {
            let spec = SweepSpec {
                methods: a.method,
                seq_lens: a.seq_len,
                head_dim: a.head_dim,
                gqa: a.gqa,
                ranks: a.rank,
                topks: a.topk,
                local: a.local,
                trials: a.trials,
                seed: a.seed,
                tail: a.tail,
                reallocate_mean: realloc_flag(a.no_realloc),
                flexgen_renormalize: a.flexgen_renormalize,
            };
            let report = run_sweep(&spec)?;
            emit(&a.output, &report.render(a.output.format.into())?)
        }
        Command::Cost(a) => {
            let spec = CostSpec {
                methods: a.method,
                seq_lens: a.seq_len,
                head_dim: a.head_dim,
                rank: a.rank,
                topk: a.topk,
                reallocate_mean: !a.no_realloc,
            };
            let report = run_cost(&spec)?;
            emit(&a.output, &report.render(a.output.format.into())?)
        }
        Command::Agreement(a) => {
            let report = match &a.trace {
                Some(path) => {
                    let workload = TraceFile::read(path)?.to_workload()?;
                    run_agreement_on(&workload, &a.rank, a.topk, a.seed)?
                }
                None => run_agreement(&AgreementSpec {
                    seq_len: a.seq_len,
                    head_dim: a.head_dim,
                    ranks: a.rank,
                    topk: a.topk,
                    trials: a.trials,
                    seed: a.seed,
                    tail: a.tail,
                })?,
            };
            emit(&a.output, &report.render(a.output.format.into())?)
        }
        Command::TraceEval(a) => {
            let mut params = MethodParams::new(a.rank, a.topk)
                .local(a.local)
                .reallocate_mean(realloc_flag(a.no_realloc));
            params.flexgen_renormalize = a.flexgen_renormalize;
            let report = trace_eval(&a.trace, &a.method, &params)?;
            emit(&a.output, &report.render(a.output.format.into())?)
        }
        Command::GenTrace(a) => {
            let workload = synth_workload(a.seq_len, a.head_dim, a.gqa, a.tail, a.seed)?;
            let dtype = match a.dtype {
                DTypeArg::F32 => DType::F32,
                DTypeArg::F64 => DType::F64,
            };
            TraceFile::from_workload(&workload, dtype)?.write(&a.out)
        }
    }
}

fn exit_code(e: &SparqError) -> u8 {
    if e.is_ledger_divergence() {
        3
    } else if matches!(e, SparqError::Io(_) | SparqError::Report(_)) {
        1
    } else {
        2
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::debug!("{e:?}");
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
