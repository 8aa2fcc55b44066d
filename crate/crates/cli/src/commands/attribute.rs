use std::path::PathBuf;

use clap::{Args, ValueEnum};
use ehr_fusion::attribution::{
    attribute_note_hours, attribute_note_tokens, rank_words, top_word_frequency, Granularity,
    IgConfig, NoteAttribution, ShapleyEstimator, TokenScore,
};
use ehr_fusion::attribution::variable_shapley;
use ehr_fusion::data::SplitName;
use ehr_fusion::model::prepare_inputs;
use serde::Serialize;
use serde_json::json;

use crate::commands::eval::open_checkpoint;
use crate::commands::train::split_name;
use crate::config::{check_compatible, Embeddings};
use crate::dataset::Dataset;
use crate::error::CliError;
use crate::io::{csv_bytes, json_bytes, resolve_out_dir, OutputDir};
use crate::report::{shapley_bar_chart, token_report_html};
use crate::seeds::{derive_seed, Stream};

pub const TOKENS_FILE: &str = "tokens.csv";
pub const HOURS_FILE: &str = "hours.csv";
pub const WORDS_FILE: &str = "words.csv";
pub const FREQUENCY_FILE: &str = "frequency.csv";
pub const NOTES_SUMMARY_FILE: &str = "summary.json";
pub const NOTES_REPORT_FILE: &str = "report.html";
pub const SHAPLEY_FILE: &str = "shapley.csv";
pub const SHAPLEY_EPISODES_FILE: &str = "shapley_episodes.csv";
pub const SHAPLEY_JSON_FILE: &str = "shapley.json";
pub const SHAPLEY_SVG_FILE: &str = "shapley.svg";

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Notes,
    Variables,
}

#[derive(Debug, Args)]
pub struct AttributeArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum)]
    pub mode: Mode,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value = "test")]
    pub split: SplitName,
    /// Attribute only the first N episodes of the split.
    #[arg(long)]
    pub limit: Option<usize>,
    /// Integrated-gradients path steps.
    #[arg(long, default_value_t = 512)]
    pub steps: usize,
    /// Path points evaluated per batch.
    #[arg(long, default_value_t = 64)]
    pub chunk: usize,
    /// Sampled permutations per episode (variables mode).
    #[arg(long, default_value_t = 64)]
    pub permutations: usize,
    /// Enumerate all coalitions instead of sampling.
    #[arg(long)]
    pub exact: bool,
    /// Master seed for the sampling stream.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Per-note ranking depth for the frequency table.
    #[arg(long, default_value_t = 10)]
    pub top_k: usize,
    /// Minimum occurrences for a word to be ranked by mean score.
    #[arg(long, default_value_t = 5)]
    pub min_count: usize,
    /// Episodes rendered in the HTML report.
    #[arg(long, default_value_t = 25)]
    pub report_episodes: usize,
}

#[derive(Serialize)]
struct TokenRow<'a> {
    episode: &'a str,
    hour: usize,
    note: usize,
    position: usize,
    token: &'a str,
    score: f64,
    rank: usize,
}

#[derive(Serialize)]
struct HourRow<'a> {
    episode: &'a str,
    hour: usize,
    score: f64,
}

#[derive(Serialize)]
struct FrequencyRow<'a> {
    word: &'a str,
    notes: usize,
}

#[derive(Serialize)]
struct EpisodeSummary<'a> {
    episode: &'a str,
    label: f64,
    prediction: f64,
    baseline_prediction: f64,
    residual: f64,
    relative_residual: f64,
}

#[derive(Serialize)]
struct ShapleyRow<'a> {
    rank: usize,
    variable: &'a str,
    mean_abs: f64,
    mean_signed: f64,
    stderr: f64,
    ci_low: f64,
    ci_high: f64,
    estimator: &'a str,
}

pub fn run(args: AttributeArgs) -> Result<PathBuf, CliError> {
    let (ckpt, embeddings) = open_checkpoint(&args.checkpoint)?;
    let data = Dataset::load(&args.data)?;
    check_compatible(&ckpt.model.config, &data.schema, &embeddings)?;
    let all = data.episodes(args.split);
    let episodes = &all[..args.limit.unwrap_or(all.len()).min(all.len())];
    let inputs = prepare_inputs(episodes, &data.schema, &embeddings.source())?;
    let mut out = OutputDir::create(resolve_out_dir(args.out.clone())?)?;
    let mut config = json!({
        "mode": format!("{:?}", args.mode).to_lowercase(),
        "split": split_name(args.split),
        "episodes": episodes.len(),
        "model": ckpt.model.kind,
    });
    let summary = match args.mode {
        Mode::Notes => {
            config["steps"] = json!(args.steps);
            config["top_k"] = json!(args.top_k);
            config["min_count"] = json!(args.min_count);
            notes_mode(&args, &ckpt.model, &embeddings, episodes, &inputs, &mut out)?
        }
        Mode::Variables => {
            let estimator = if args.exact {
                ShapleyEstimator::Exact
            } else {
                ShapleyEstimator::Sampled {
                    permutations: args.permutations,
                    seed: derive_seed(args.seed, Stream::Sampling, 0),
                }
            };
            config["estimator"] = json!(estimator);
            let report = variable_shapley(
                &ckpt.model,
                &inputs,
                &data.schema,
                estimator,
                ckpt.step > 0,
            )?;
            write_shapley(&report, &data.schema, &mut out)?;
            json!({ "warnings": report.warnings, "ranking": report.ranking().iter().map(|v| &v.variable).collect::<Vec<_>>() })
        }
    };
    for w in summary["warnings"].as_array().into_iter().flatten() {
        eprintln!("warning: {}", w.as_str().unwrap_or_default());
    }
    out.finish(
        "attribute",
        config,
        vec![args.seed],
        vec![args.checkpoint.display().to_string(), args.data.display().to_string()],
        summary,
    )
}

fn notes_mode(
    args: &AttributeArgs,
    model: &ehr_fusion::model::Model,
    embeddings: &Embeddings,
    episodes: &[ehr_fusion::data::ClinicalEpisode],
    inputs: &[ehr_fusion::model::ModelInput],
    out: &mut OutputDir,
) -> Result<serde_json::Value, CliError> {
    if !model.kind.uses_notes() {
        return Err(CliError::InvalidArgument(format!(
            "model {} does not read notes",
            model.kind
        )));
    }
    let cfg = IgConfig {
        steps: args.steps,
        chunk: args.chunk,
    };
    let mut warnings = Vec::new();
    if embeddings.hash().is_none() {
        warnings.push(
            "embedding file has no token decomposition; reporting per-hour attributions".to_string(),
        );
    }
    let mut atts: Vec<NoteAttribution> = Vec::with_capacity(episodes.len());
    for (ep, input) in episodes.iter().zip(inputs) {
        let att = match embeddings.hash() {
            Some(h) => attribute_note_tokens(model, ep, input, Some(h), &cfg)?,
            None => attribute_note_hours(model, input, &cfg)?,
        };
        atts.push(att);
    }

    let mut notes: Vec<(&str, Vec<TokenScore>)> = Vec::new();
    let mut hour_rows = Vec::new();
    for att in &atts {
        for h in &att.hours {
            hour_rows.push(HourRow {
                episode: &att.episode,
                hour: h.hour,
                score: h.score,
            });
        }
        if att.granularity == Granularity::Token {
            notes.extend(att.rankings_by_note().into_iter().map(|r| (att.episode.as_str(), r)));
        }
    }
    let (note_episodes, rankings): (Vec<&str>, Vec<Vec<TokenScore>>) = notes.into_iter().unzip();
    let rows: Vec<TokenRow> = note_episodes
        .iter()
        .zip(&rankings)
        .flat_map(|(episode, ranking)| {
            ranking.iter().enumerate().map(move |(i, t)| TokenRow {
                episode,
                hour: t.hour,
                note: t.note,
                position: t.position,
                token: &t.token,
                score: t.score,
                rank: i + 1,
            })
        })
        .collect();

    let freq = top_word_frequency(&rankings, args.top_k);
    let mut freq: Vec<(String, usize)> = freq.into_iter().collect();
    freq.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let words = rank_words(rankings.iter().flatten(), args.min_count);
    let summaries: Vec<EpisodeSummary> = atts
        .iter()
        .map(|a| EpisodeSummary {
            episode: &a.episode,
            label: a.label,
            prediction: a.prediction,
            baseline_prediction: a.baseline_prediction,
            residual: a.residual,
            relative_residual: a.relative_residual(),
        })
        .collect();

    let granularity = atts.first().map_or(Granularity::Token, |a| a.granularity);
    out.write(HOURS_FILE, &csv_bytes(&hour_rows)?)?;
    // hour-level attributions have no tokens to tabulate
    if granularity == Granularity::Token {
        out.write(TOKENS_FILE, &csv_bytes(&rows)?)?;
        out.write(WORDS_FILE, &csv_bytes(&words)?)?;
        let freq_rows: Vec<FrequencyRow> = freq
            .iter()
            .map(|(w, n)| FrequencyRow { word: w, notes: *n })
            .collect();
        out.write(FREQUENCY_FILE, &csv_bytes(&freq_rows)?)?;
    }
    let summary = json!({
        "granularity": granularity,
        "steps": args.steps,
        "warnings": warnings,
        "episodes": summaries,
        "top_words": words.iter().take(20).collect::<Vec<_>>(),
    });
    out.write(NOTES_SUMMARY_FILE, &json_bytes(&summary))?;
    let shown = args.report_episodes.min(atts.len());
    let eps: Vec<_> = episodes[..shown].iter().collect();
    let top_freq: Vec<(String, usize)> = freq.iter().take(30).cloned().collect();
    out.write(
        NOTES_REPORT_FILE,
        token_report_html(&atts[..shown], &eps, &top_freq, args.top_k).as_bytes(),
    )?;
    Ok(json!({
        "warnings": warnings,
        "granularity": granularity,
        "top_words": words.iter().take(10).map(|w| &w.word).collect::<Vec<_>>(),
    }))
}

fn write_shapley(
    report: &ehr_fusion::attribution::ShapleyReport,
    schema: &ehr_fusion::data::VariableSchema,
    out: &mut OutputDir,
) -> Result<(), CliError> {
    let ranked = report.ranking();
    let rows: Vec<ShapleyRow> = ranked
        .iter()
        .enumerate()
        .map(|(i, v)| ShapleyRow {
            rank: i + 1,
            variable: &v.variable,
            mean_abs: v.mean_abs,
            mean_signed: v.mean_signed,
            stderr: v.stderr,
            ci_low: v.ci95.0,
            ci_high: v.ci95.1,
            estimator: &v.estimator,
        })
        .collect();
    out.write(SHAPLEY_FILE, &csv_bytes(&rows)?)?;

    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["episode".to_string(), "label".into(), "prediction".into(), "baseline".into()];
    header.extend(schema.variables.iter().map(|v| v.name.clone()));
    w.write_record(&header)?;
    for e in &report.episodes {
        let mut rec = vec![
            e.id.clone(),
            e.label.to_string(),
            e.prediction.to_string(),
            e.baseline.to_string(),
        ];
        rec.extend(e.values.iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| CliError::Csv(csv::Error::from(e.into_error())))?;
    out.write(SHAPLEY_EPISODES_FILE, &bytes)?;
    out.write(SHAPLEY_JSON_FILE, &json_bytes(report))?;
    out.write(SHAPLEY_SVG_FILE, shapley_bar_chart(&ranked).as_bytes())?;
    Ok(())
}
