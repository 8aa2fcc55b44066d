use std::io::Write;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::Args;
use ehr_fusion::data::SplitName;
use ehr_fusion::model::{checkpoint_bytes, prepare_inputs, Model, ModelInput, ModelKind};
use ehr_fusion::train::{aggregate, evaluate, train, EvalResult, TrainConfig, DEFAULT_THRESHOLD};
use serde::Serialize;
use serde_json::json;

use crate::config::{bind_model_config, EmbeddingSpec, Embeddings, RunConfig};
use crate::dataset::Dataset;
use crate::error::CliError;
use crate::io::{atomic_write, csv_bytes, resolve_out_dir, OutputDir};
use crate::seeds::{derive_seed, Stream};

pub const METRICS_FILE: &str = "metrics.csv";
pub const EVAL_BATCH: usize = 256;

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset directory written by gen-data.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub model: ModelKind,
    /// `hash` or `file:PATH`.
    #[arg(long, default_value = "hash")]
    pub embeddings: EmbeddingSpec,
    /// Number of independently initialized runs.
    #[arg(long, default_value_t = 1)]
    pub seeds: usize,
    /// Master seed for the init and sampling streams.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// JSON file with `model`, `train` and `hash` sections.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long)]
    pub threads: Option<usize>,
}

pub fn checkpoint_file(run: usize) -> String {
    format!("seed{run}.ckpt")
}

pub fn log_file(run: usize) -> String {
    format!("seed{run}.log.ndjson")
}

pub fn seed_metrics_file(run: usize) -> String {
    format!("seed{run}.metrics.csv")
}

/// One row of a per-run metrics CSV (also written by `eval`).
#[derive(Debug, Serialize)]
pub struct EvalRow {
    pub model: String,
    pub split: String,
    pub episodes: usize,
    pub positives: usize,
    pub aucroc: f64,
    pub aucpr: f64,
    pub f1: f64,
    pub threshold: f64,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl EvalRow {
    pub fn new(kind: ModelKind, split: SplitName, inputs: &[ModelInput], r: &EvalResult) -> Self {
        Self {
            model: kind.to_string(),
            split: split_name(split).into(),
            episodes: inputs.len(),
            positives: inputs.iter().filter(|i| i.label == 1.0).count(),
            aucroc: r.aucroc,
            aucpr: r.aucpr,
            f1: r.f1,
            threshold: r.threshold,
            tp: r.confusion.tp,
            fp: r.confusion.fp,
            tn: r.confusion.tn,
            fn_: r.confusion.fn_,
        }
    }
}

pub fn split_name(s: SplitName) -> &'static str {
    match s {
        SplitName::Train => "train",
        SplitName::Validation => "validation",
        SplitName::Test => "test",
    }
}

/// Aggregate row: `mean±std` display columns followed by the raw numbers.
#[derive(Debug, Serialize)]
struct AggregateRow {
    model: String,
    runs: usize,
    aucroc: String,
    aucpr: String,
    f1: String,
    aucroc_mean: f64,
    aucroc_std: f64,
    aucpr_mean: f64,
    aucpr_std: f64,
    f1_mean: f64,
    f1_std: f64,
}

struct RunResult {
    init_seed: u64,
    eval: EvalResult,
    best_epoch: usize,
    epochs_run: usize,
}

struct Shared<'a> {
    kind: ModelKind,
    run_cfg: &'a RunConfig,
    embeddings: &'a Embeddings,
    train: &'a [ModelInput],
    validation: &'a [ModelInput],
    test: &'a [ModelInput],
    out: &'a OutputDir,
    master_seed: u64,
}

fn run_one(s: &Shared, run: usize) -> Result<RunResult, CliError> {
    let init_seed = derive_seed(s.master_seed, Stream::Init, run as u64);
    let sampling_seed = derive_seed(s.master_seed, Stream::Sampling, run as u64);
    let model = Model::new(s.kind, s.run_cfg.model.clone(), init_seed)?;
    let cfg = TrainConfig {
        seed: sampling_seed,
        ..s.run_cfg.train.clone()
    };

    let log_path = s.out.path(&log_file(run));
    let file = std::fs::File::create(&log_path).map_err(|e| CliError::io(&log_path, e))?;
    let mut log = std::io::BufWriter::new(file);
    let mut log_err = None;
    let outcome = train(model, s.train, s.validation, &cfg, &mut |event| {
        if log_err.is_none() {
            let line = serde_json::to_string(event).expect("serializable event");
            if let Err(e) = writeln!(log, "{line}") {
                log_err = Some(e);
            }
        }
    })?;
    if let Some(e) = log_err {
        return Err(CliError::io(&log_path, e));
    }
    log.flush().map_err(|e| CliError::io(&log_path, e))?;

    let scores = outcome.model.predict(s.test, EVAL_BATCH)?;
    let labels: Vec<f64> = s.test.iter().map(|i| i.label).collect();
    let eval = evaluate(&scores, &labels, DEFAULT_THRESHOLD)?;

    let extra = json!({
        "run": run,
        "master_seed": s.master_seed,
        "sampling_seed": sampling_seed,
        "embeddings": s.embeddings.descriptor(),
        "train": cfg,
        "best_epoch": outcome.best_epoch,
        "epochs_run": outcome.epochs_run,
    });
    let bytes = checkpoint_bytes(&outcome.model, init_seed, outcome.steps as u64, extra)?;
    atomic_write(&s.out.path(&checkpoint_file(run)), &bytes)?;
    let row = EvalRow::new(s.kind, SplitName::Test, s.test, &eval);
    atomic_write(&s.out.path(&seed_metrics_file(run)), &csv_bytes(&[row])?)?;
    Ok(RunResult {
        init_seed,
        eval,
        best_epoch: outcome.best_epoch,
        epochs_run: outcome.epochs_run,
    })
}

/// Run `count` jobs on up to `threads` workers; results come back in job
/// order regardless of completion order.
pub fn fan_out<T: Send>(
    count: usize,
    threads: usize,
    job: impl Fn(usize) -> Result<T, CliError> + Sync,
) -> Result<Vec<T>, CliError> {
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<T, CliError>>>> =
        Mutex::new((0..count).map(|_| None).collect());
    let workers = threads.clamp(1, count.max(1));
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|_| {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    if i >= count {
                        break;
                    }
                    let r = job(i);
                    slots.lock().expect("unpoisoned")[i] = Some(r);
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join()).collect::<Vec<_>>()
    })
    .into_iter()
    .collect::<Result<Vec<()>, _>>()
    .map_err(|_| CliError::WorkerPanic)?;
    slots
        .into_inner()
        .expect("unpoisoned")
        .into_iter()
        .map(|r| r.ok_or(CliError::WorkerPanic)?)
        .collect()
}

pub fn run(args: TrainArgs) -> Result<PathBuf, CliError> {
    if args.seeds == 0 {
        return Err(CliError::InvalidArgument("--seeds must be at least 1".into()));
    }
    let mut run_cfg = RunConfig::load(args.config.as_deref())?;
    run_cfg.train.validate()?;
    let data = Dataset::load(&args.data)?;
    let embeddings = Embeddings::open(&args.embeddings, &run_cfg.hash)?;
    run_cfg.model = bind_model_config(run_cfg.model, &data.schema, &embeddings)?;

    let source = embeddings.source();
    let prep = |s: SplitName| prepare_inputs(data.episodes(s), &data.schema, &source);
    let train_set = prep(SplitName::Train)?;
    let validation = prep(SplitName::Validation)?;
    let test = prep(SplitName::Test)?;

    let out = OutputDir::create(resolve_out_dir(args.out)?)?;
    let threads = args
        .threads
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let shared = Shared {
        kind: args.model,
        run_cfg: &run_cfg,
        embeddings: &embeddings,
        train: &train_set,
        validation: &validation,
        test: &test,
        out: &out,
        master_seed: args.seed,
    };
    let results = fan_out(args.seeds, threads, |run| run_one(&shared, run))?;

    let mut out = out;
    for run in 0..args.seeds {
        out.declare(&checkpoint_file(run));
        out.declare(&log_file(run));
        out.declare(&seed_metrics_file(run));
    }
    let evals: Vec<EvalResult> = results.iter().map(|r| r.eval).collect();
    let agg = aggregate(&evals);
    let fmt = |m: ehr_fusion::train::MeanStd| format!("{:.4}±{:.4}", m.mean, m.std);
    let row = AggregateRow {
        model: args.model.to_string(),
        runs: agg.runs,
        aucroc: fmt(agg.aucroc),
        aucpr: fmt(agg.aucpr),
        f1: fmt(agg.f1),
        aucroc_mean: agg.aucroc.mean,
        aucroc_std: agg.aucroc.std,
        aucpr_mean: agg.aucpr.mean,
        aucpr_std: agg.aucpr.std,
        f1_mean: agg.f1.mean,
        f1_std: agg.f1.std,
    };
    out.write(METRICS_FILE, &csv_bytes(&[row])?)?;

    let mut inputs = vec![args.data.display().to_string()];
    if let EmbeddingSpec::File(p) = &args.embeddings {
        inputs.push(p.display().to_string());
    }
    inputs.extend(args.config.iter().map(|p| p.display().to_string()));
    let runs: Vec<_> = results
        .iter()
        .map(|r| json!({ "init_seed": r.init_seed, "best_epoch": r.best_epoch, "epochs_run": r.epochs_run }))
        .collect();
    out.finish(
        "train",
        json!({ "model": args.model, "run_config": run_cfg, "embeddings": embeddings.descriptor(), "threads": threads }),
        vec![args.seed],
        inputs,
        json!({ "aggregate": agg, "runs": runs }),
    )
}
