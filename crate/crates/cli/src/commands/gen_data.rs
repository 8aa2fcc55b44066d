use std::path::PathBuf;

use clap::Args;
use ehr_fusion::data::{default_schema, generate_synthetic, SignalConfig};
use serde_json::json;

use crate::dataset::{EPISODES_FILE, PLANTED_FILE, SCHEMA_FILE, SIGNAL_FILE, SPLITS_FILE};
use crate::error::CliError;
use crate::io::{json_bytes, read_json, resolve_out_dir, OutputDir};
use crate::seeds::{derive_seed, Stream};

#[derive(Debug, Args)]
pub struct GenDataArgs {
    /// Number of episodes.
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// JSON file overriding fields of the planted-signal configuration.
    #[arg(long)]
    pub signal_config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(args: GenDataArgs) -> Result<PathBuf, CliError> {
    let signal: SignalConfig = match &args.signal_config {
        Some(p) => read_json(p)?,
        None => SignalConfig::default(),
    };
    let schema = default_schema();
    let data_seed = derive_seed(args.seed, Stream::Data, 0);
    let ds = generate_synthetic(args.n, data_seed, &schema, &signal)?;

    let mut out = OutputDir::create(resolve_out_dir(args.out)?)?;
    let episodes: Vec<_> = ds.split.all().cloned().collect();
    let mut lines = Vec::new();
    for ep in &episodes {
        serde_json::to_writer(&mut lines, ep).expect("serializable episode");
        lines.push(b'\n');
    }
    out.write(EPISODES_FILE, &lines)?;
    out.write(SCHEMA_FILE, &json_bytes(&schema))?;
    out.write(SPLITS_FILE, &json_bytes(&ds.split.ids()))?;
    out.write(SIGNAL_FILE, &json_bytes(&signal))?;
    out.write(
        PLANTED_FILE,
        &json_bytes(&json!({ "intercept": ds.intercept, "episodes": ds.factors })),
    )?;

    let stats = ds.split.stats();
    let inputs = args
        .signal_config
        .iter()
        .map(|p| p.display().to_string())
        .collect();
    out.finish(
        "gen-data",
        json!({ "n": args.n, "signal": signal }),
        vec![args.seed],
        inputs,
        json!({
            "prevalence": stats.overall.prevalence,
            "stats": stats,
            "data_seed": data_seed,
        }),
    )
}
