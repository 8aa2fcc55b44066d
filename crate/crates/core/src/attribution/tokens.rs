use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::ig::{notes_integrated_gradients, IgConfig};
use super::AttributionError;
use crate::data::{hour_bucket, ClinicalEpisode};
use crate::model::{Model, ModelInput};
use crate::notes::HashEmbedder;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    Token,
    Hour,
}

/// One token occurrence and its share of the hour row's IG.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TokenScore {
    pub hour: usize,
    /// Index of the source note in the episode's note events.
    pub note: usize,
    /// Position of the token within its note.
    pub position: usize,
    pub token: String,
    pub score: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HourScore {
    pub hour: usize,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoteAttribution {
    pub episode: String,
    pub label: f64,
    pub prediction: f64,
    pub baseline_prediction: f64,
    pub residual: f64,
    pub steps: usize,
    pub granularity: Granularity,
    /// IG summed over each present hour's embedding row.
    pub hours: Vec<HourScore>,
    /// Raw per-occurrence scores; empty at hour granularity.
    pub tokens: Vec<TokenScore>,
}

impl NoteAttribution {
    /// Post-processed ranking of every note, in note order.
    pub fn rankings_by_note(&self) -> Vec<Vec<TokenScore>> {
        let mut by_note: BTreeMap<usize, Vec<TokenScore>> = BTreeMap::new();
        for t in &self.tokens {
            by_note.entry(t.note).or_default().push(t.clone());
        }
        by_note
            .into_values()
            .map(|v| postprocess_tokens(&v))
            .collect()
    }

    /// Completeness residual relative to the prediction change.
    pub fn relative_residual(&self) -> f64 {
        self.residual / (self.prediction - self.baseline_prediction).abs()
    }
}

fn attribute(
    model: &Model,
    input: &ModelInput,
    cfg: &IgConfig,
) -> Result<(super::IgResult, Vec<HourScore>), AttributionError> {
    let ig = notes_integrated_gradients(model, input, cfg)?;
    let d = model.config.notes_dim;
    let hours = (0..model.config.hours)
        .filter(|&h| input.mask[h] == 1.0)
        .map(|h| HourScore {
            hour: h,
            score: ig.attributions.data()[h * d..(h + 1) * d].iter().sum(),
        })
        .collect();
    Ok((ig, hours))
}

/// Per-hour IG when note embeddings cannot be split into tokens.
pub fn attribute_note_hours(
    model: &Model,
    input: &ModelInput,
    cfg: &IgConfig,
) -> Result<NoteAttribution, AttributionError> {
    let (ig, hours) = attribute(model, input, cfg)?;
    Ok(NoteAttribution {
        episode: input.id.clone(),
        label: input.label,
        prediction: ig.output,
        baseline_prediction: ig.baseline_output,
        residual: ig.residual,
        steps: ig.steps,
        granularity: Granularity::Hour,
        hours,
        tokens: Vec::new(),
    })
}

/// Per-token IG. An hour row is the mean of its token vectors, so token `j`
/// of an `n`-token hour receives `Σ_d v_j[d] / n · ḡ[d]`, where `ḡ` is the
/// mean path gradient of that row; token scores sum to the row's IG.
///
/// Without a hash embedder the row cannot be decomposed and
/// [`AttributionError::GranularityUnavailable`] is returned; callers fall
/// back to [`attribute_note_hours`].
pub fn attribute_note_tokens(
    model: &Model,
    episode: &ClinicalEpisode,
    input: &ModelInput,
    embedder: Option<&HashEmbedder>,
    cfg: &IgConfig,
) -> Result<NoteAttribution, AttributionError> {
    let embedder = embedder.ok_or(AttributionError::GranularityUnavailable)?;
    let (hours_n, d) = (model.config.hours, model.config.notes_dim);
    if embedder.dim != d {
        return Err(crate::notes::NotesError::DimensionMismatch {
            expected: d,
            actual: embedder.dim,
        }
        .into());
    }
    // notes in concatenation order: by time, ties by input order
    let mut order: Vec<(usize, usize)> = episode
        .note_events
        .iter()
        .enumerate()
        .map(|(i, n)| hour_bucket(n.hour, hours_n).map(|h| (h, i)))
        .collect::<Result<_, _>>()
        .map_err(crate::notes::NotesError::from)?;
    order.sort_by(|a, b| {
        episode.note_events[a.1]
            .hour
            .total_cmp(&episode.note_events[b.1].hour)
            .then(a.1.cmp(&b.1))
    });
    let mut counts = vec![0usize; hours_n];
    for &(h, i) in &order {
        counts[h] += episode.note_events[i].tokens.len();
    }

    let (ig, hours) = attribute(model, input, cfg)?;
    let grad = ig.mean_gradient.data();
    let mut tokens = Vec::new();
    let mut row_check = vec![0.0; hours_n * d];
    for &(h, i) in &order {
        let n = counts[h] as f64;
        for (pos, tok) in episode.note_events[i].tokens.iter().enumerate() {
            let v = embedder.token_vector(tok);
            let mut score = 0.0;
            for k in 0..d {
                score += v[k] / n * grad[h * d + k];
                row_check[h * d + k] += v[k] / n;
            }
            tokens.push(TokenScore {
                hour: h,
                note: i,
                position: pos,
                token: tok.clone(),
                score,
            });
        }
    }
    for h in 0..hours_n {
        let stored = &input.notes[h * d..(h + 1) * d];
        let rebuilt = &row_check[h * d..(h + 1) * d];
        if stored
            .iter()
            .zip(rebuilt)
            .any(|(a, b)| (a - b).abs() > 1e-9 * (1.0 + a.abs()))
        {
            return Err(AttributionError::EmbeddingMismatch { hour: h });
        }
    }
    Ok(NoteAttribution {
        episode: input.id.clone(),
        label: input.label,
        prediction: ig.output,
        baseline_prediction: ig.baseline_output,
        residual: ig.residual,
        steps: ig.steps,
        granularity: Granularity::Token,
        hours,
        tokens,
    })
}

pub const SEPARATORS: &[&str] = &[
    ".", ",", ";", ":", "-", "/", "(", ")", "[", "]", "#", "*", "\n", "\r\n", "\\n", "[NL]",
    "[SEP]", "[CLS]",
];

fn is_numeric(token: &str) -> bool {
    token.chars().any(|c| c.is_ascii_digit())
        && token
            .chars()
            .all(|c| c.is_ascii_digit() || ".,+-/:%".contains(c))
}

/// True for tokens dropped from rankings: numbers, one- or two-character
/// tokens, separators and punctuation-only tokens.
pub fn is_filtered(token: &str) -> bool {
    token.chars().count() <= 2
        || SEPARATORS.contains(&token)
        || is_numeric(token)
        || !token.chars().any(char::is_alphanumeric)
}

/// Merge `##` continuation pieces into the preceding token of the same note
/// (scores add), drop filtered tokens, and rank by descending score with
/// ties broken by token text, then note and position.
pub fn postprocess_tokens(tokens: &[TokenScore]) -> Vec<TokenScore> {
    let mut sorted: Vec<&TokenScore> = tokens.iter().collect();
    sorted.sort_by_key(|t| (t.note, t.position));
    let mut merged: Vec<TokenScore> = Vec::new();
    for t in sorted {
        match (t.token.strip_prefix("##"), merged.last_mut()) {
            (Some(rest), Some(prev)) if prev.note == t.note && !rest.is_empty() => {
                prev.token.push_str(rest);
                prev.score += t.score;
            }
            (Some(rest), _) => merged.push(TokenScore {
                token: rest.to_string(),
                ..t.clone()
            }),
            (None, _) => merged.push(t.clone()),
        }
    }
    merged.retain(|t| !is_filtered(&t.token));
    merged.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.token.cmp(&b.token))
            .then((a.note, a.position).cmp(&(b.note, b.position)))
    });
    merged
}

/// How many notes have each word among their top `k` entries.
pub fn top_word_frequency(rankings: &[Vec<TokenScore>], k: usize) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for ranking in rankings {
        let words: BTreeSet<&str> = ranking.iter().take(k).map(|t| t.token.as_str()).collect();
        for w in words {
            *counts.entry(w.to_string()).or_insert(0) += 1;
        }
    }
    counts
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WordRank {
    pub word: String,
    pub mean_score: f64,
    pub count: usize,
}

/// Words by mean score over all their occurrences, keeping words seen at
/// least `min_count` times.
pub fn rank_words<'a>(
    tokens: impl IntoIterator<Item = &'a TokenScore>,
    min_count: usize,
) -> Vec<WordRank> {
    let mut acc: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
    for t in tokens {
        let e = acc.entry(t.token.as_str()).or_insert((0.0, 0));
        e.0 += t.score;
        e.1 += 1;
    }
    let mut out: Vec<WordRank> = acc
        .into_iter()
        .filter(|(_, (_, c))| *c >= min_count.max(1))
        .map(|(w, (s, c))| WordRank {
            word: w.to_string(),
            mean_score: s / c as f64,
            count: c,
        })
        .collect();
    out.sort_by(|a, b| {
        b.mean_score
            .total_cmp(&a.mean_score)
            .then_with(|| a.word.cmp(&b.word))
    });
    out
}
