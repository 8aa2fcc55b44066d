use std::path::PathBuf;

use clap::Args;
use ehr_fusion::data::SplitName;
use ehr_fusion::model::{prepare_inputs, read_checkpoint, Checkpoint};
use ehr_fusion::train::{evaluate, DEFAULT_THRESHOLD};
use serde_json::json;

use crate::commands::train::{split_name, EvalRow, EVAL_BATCH};
use crate::config::{check_compatible, EmbeddingDescriptor, Embeddings};
use crate::dataset::Dataset;
use crate::error::CliError;
use crate::io::{csv_bytes, resolve_out_dir, OutputDir};

pub const EVAL_FILE: &str = "eval.csv";

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// train, validation or test.
    #[arg(long, default_value = "test")]
    pub split: SplitName,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Load a checkpoint with the embedding source it was trained on.
pub fn open_checkpoint(path: &std::path::Path) -> Result<(Checkpoint, Embeddings), CliError> {
    let ckpt = read_checkpoint(path)?;
    let descriptor: EmbeddingDescriptor = serde_json::from_value(ckpt.extra["embeddings"].clone())
        .map_err(|source| CliError::Json {
            path: path.to_path_buf(),
            source,
        })?;
    let embeddings = Embeddings::from_descriptor(&descriptor)?;
    Ok((ckpt, embeddings))
}

pub fn run(args: EvalArgs) -> Result<PathBuf, CliError> {
    let (ckpt, embeddings) = open_checkpoint(&args.checkpoint)?;
    let data = Dataset::load(&args.data)?;
    check_compatible(&ckpt.model.config, &data.schema, &embeddings)?;
    let inputs = prepare_inputs(data.episodes(args.split), &data.schema, &embeddings.source())?;
    let scores = ckpt.model.predict(&inputs, EVAL_BATCH)?;
    let labels: Vec<f64> = inputs.iter().map(|i| i.label).collect();
    let result = evaluate(&scores, &labels, DEFAULT_THRESHOLD)?;

    let mut out = OutputDir::create(resolve_out_dir(args.out)?)?;
    let row = EvalRow::new(ckpt.model.kind, args.split, &inputs, &result);
    out.write(EVAL_FILE, &csv_bytes(&[row])?)?;
    out.finish(
        "eval",
        json!({ "split": split_name(args.split), "model": ckpt.model.kind, "model_config": ckpt.model.config }),
        vec![ckpt.seed],
        vec![args.checkpoint.display().to_string(), args.data.display().to_string()],
        json!({ "result": result }),
    )
}
