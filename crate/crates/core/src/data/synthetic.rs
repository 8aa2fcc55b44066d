//! Synthetic ICU episodes with planted, recoverable label signal.
//!
//! The label is a noisy logistic function of three latent factors:
//! a linear trend in one continuous variable, a low-value pattern in one
//! categorical variable, and a cross-modal event where a specific note token
//! appears in the same hour as an abnormal reading of a second variable.
//! Decoys place the token and the abnormal reading in different hours so that
//! neither modality alone recovers the cross-modal factor.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::episode::{ClinicalEpisode, NoteEvent, Observation, RawValue};
use super::schema::{self, VariableKind, VariableSchema};
use super::split::DatasetSplit;
use super::DataError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SignalConfig {
    /// Target fraction of positive labels.
    pub prevalence: f64,
    pub trend_variable: String,
    /// Raw change over the whole stay per unit of latent slope.
    pub trend_span: f64,
    pub trend_effect: f64,
    pub pattern_variable: String,
    /// Categories that make up the pattern (e.g. severe GCS totals).
    pub pattern_categories: Vec<String>,
    pub pattern_rate: f64,
    pub pattern_effect: f64,
    pub cross_token: String,
    pub cross_variable: String,
    /// Raw range of the abnormal reading.
    pub cross_low: (f64, f64),
    pub cross_rate: f64,
    pub cross_effect: f64,
    /// Probability of the token appearing next to a normal reading.
    pub decoy_token_rate: f64,
    /// Probability of an abnormal reading without the token.
    pub decoy_reading_rate: f64,
    /// Std of Gaussian noise added to the label logit.
    pub logit_noise: f64,
}

impl Default for SignalConfig {
    fn default() -> Self {
        Self {
            prevalence: 0.132,
            trend_variable: schema::HEART_RATE.into(),
            trend_span: 30.0,
            trend_effect: 1.6,
            pattern_variable: schema::GCS_TOTAL.into(),
            pattern_categories: ["3", "4", "5", "6", "7", "8"].map(String::from).to_vec(),
            pattern_rate: 0.2,
            pattern_effect: 1.4,
            cross_token: "desaturation".into(),
            cross_variable: schema::SPO2.into(),
            cross_low: (82.0, 88.0),
            cross_rate: 0.2,
            cross_effect: 2.6,
            decoy_token_rate: 0.05,
            decoy_reading_rate: 0.35,
            logit_noise: 0.3,
        }
    }
}

/// Latent factors behind one generated episode's label.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantedFactors {
    pub slope: f64,
    pub pattern: bool,
    pub cross: bool,
    pub decoy_token: bool,
    pub decoy_reading: bool,
    pub logit: f64,
}

#[derive(Clone, Debug)]
pub struct SyntheticDataset {
    pub split: DatasetSplit,
    pub factors: BTreeMap<String, PlantedFactors>,
    /// Logit intercept chosen to hit the target prevalence in expectation.
    pub intercept: f64,
}

pub const FILLER_WORDS: &[&str] = &[
    "patient",
    "stable",
    "plan",
    "continue",
    "monitor",
    "family",
    "care",
    "pain",
    "chest",
    "lungs",
    "clear",
    "bilateral",
    "sedated",
    "intubated",
    "fever",
    "cough",
    "abdomen",
    "soft",
    "nontender",
    "urine",
    "output",
    "adequate",
    "heart",
    "rhythm",
    "sinus",
    "pressure",
    "tolerating",
    "diet",
    "wound",
    "dressing",
    "changed",
    "skin",
    "intact",
    "neuro",
    "alert",
    "oriented",
    "comfortable",
    "resting",
    "nursing",
    "note",
    "assessment",
    "impression",
    "history",
    "medical",
    "condition",
    "reason",
    "examination",
    "year",
    "old",
    "with",
    "the",
    "and",
    "for",
    "was",
    "has",
    "been",
    "without",
    "acute",
    "chronic",
    "respiratory",
    "status",
    "mental",
    "commands",
    "agitation",
    "seizure",
    "edema",
    "sputum",
    "suctioned",
    "secretions",
    "diagnosis",
    "ventilator",
    "weaning",
    "sepsis",
    "antibiotics",
    "fluids",
    "bolus",
    "lactate",
    "renal",
    "dialysis",
    "creatinine",
];
pub const SHORT_TOKENS: &[&str] = &["mg", "iv", "pt", "bp", "hr", "o2", "po", "x", "a"];
pub const NUMERIC_TOKENS: &[&str] = &["10", "20", "42", "100", "3.5", "0.5", "120", "7"];
pub const SEPARATOR_TOKENS: &[&str] = &[".", ",", ";", ":", "-", "/", "(", ")"];
pub const SUBWORD_PHRASE: &[&str] = &["the", "patient", "has", "been", "ex", "##tub", "##ated"];

/// Per-hour observation probability by variable; `None` = a single reading.
fn observation_rate(name: &str) -> Option<f64> {
    match name {
        schema::HEART_RATE | schema::SPO2 => Some(0.85),
        schema::RESP_RATE => Some(0.8),
        schema::SYSTOLIC_BP | schema::DIASTOLIC_BP | schema::MEAN_BP => Some(0.75),
        schema::TEMPERATURE => Some(0.3),
        schema::GCS_TOTAL | schema::GCS_EYE | schema::GCS_MOTOR | schema::GCS_VERBAL => Some(0.25),
        schema::GLUCOSE => Some(0.15),
        schema::FIO2 => Some(0.1),
        schema::PH => Some(0.08),
        schema::CAPILLARY_REFILL => Some(0.1),
        _ => None,
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn random_note(rng: &mut ChaCha8Rng) -> Vec<String> {
    let len = rng.gen_range(6..=14);
    let mut tokens = Vec::with_capacity(len + SUBWORD_PHRASE.len());
    for _ in 0..len {
        let pick: f64 = rng.gen();
        let pool = if pick < 0.7 {
            FILLER_WORDS
        } else if pick < 0.8 {
            SHORT_TOKENS
        } else if pick < 0.9 {
            NUMERIC_TOKENS
        } else {
            SEPARATOR_TOKENS
        };
        tokens.push(pool.choose(rng).expect("non-empty pool").to_string());
    }
    if rng.gen_bool(0.15) {
        tokens.extend(SUBWORD_PHRASE.iter().map(|s| s.to_string()));
    }
    tokens
}

struct Resolved {
    trend: usize,
    pattern: usize,
    cross: usize,
}

fn resolve(schema: &VariableSchema, cfg: &SignalConfig) -> Result<Resolved, DataError> {
    let find = |name: &str| {
        schema
            .index_of(name)
            .ok_or_else(|| DataError::UnknownVariable(name.to_string()))
    };
    let r = Resolved {
        trend: find(&cfg.trend_variable)?,
        pattern: find(&cfg.pattern_variable)?,
        cross: find(&cfg.cross_variable)?,
    };
    let VariableKind::Categorical { categories } = &schema.variables[r.pattern].kind else {
        return Err(DataError::InvalidSignal(format!(
            "{} is not categorical",
            cfg.pattern_variable
        )));
    };
    if let Some(bad) = cfg
        .pattern_categories
        .iter()
        .find(|c| !categories.contains(c))
    {
        return Err(DataError::UnknownCategory {
            variable: cfg.pattern_variable.clone(),
            label: bad.clone(),
        });
    }
    if cfg.pattern_categories.len() >= categories.len() || cfg.pattern_categories.is_empty() {
        return Err(DataError::InvalidSignal(
            "pattern categories must be a proper, non-empty subset".into(),
        ));
    }
    for idx in [r.trend, r.cross] {
        if schema.variables[idx].is_categorical() {
            return Err(DataError::InvalidSignal(format!(
                "{} must be continuous",
                schema.variables[idx].name
            )));
        }
    }
    Ok(r)
}

/// Draw one episode's observations, notes and latent factors (label unset).
fn draw_episode(
    rng: &mut ChaCha8Rng,
    id: String,
    schema: &VariableSchema,
    cfg: &SignalConfig,
    r: &Resolved,
) -> (ClinicalEpisode, PlantedFactors) {
    let hours = schema.hours;
    let std_normal = Normal::new(0.0, 1.0).expect("valid normal");
    let slope: f64 = std_normal.sample(rng);
    let pattern = rng.gen_bool(cfg.pattern_rate);
    let cross = rng.gen_bool(cfg.cross_rate);
    let decoy_token = rng.gen_bool(cfg.decoy_token_rate);
    let decoy_reading = rng.gen_bool(cfg.decoy_reading_rate);

    // (variable, hour) -> value; later inserts overwrite
    let mut cells: BTreeMap<(usize, usize), RawValue> = BTreeMap::new();
    for (v, var) in schema.variables.iter().enumerate() {
        match &var.kind {
            VariableKind::Continuous {
                mean,
                std,
                min,
                max,
                ..
            } => {
                let base = mean + 0.5 * std * std_normal.sample(rng);
                let noise = 0.3 * std;
                let value_at = |rng: &mut ChaCha8Rng, h: usize| {
                    let mut x = base + noise * std_normal.sample(rng);
                    if v == r.trend {
                        x += slope * cfg.trend_span * (h as f64 / (hours - 1).max(1) as f64 - 0.5);
                    }
                    if v == r.cross {
                        // keep ordinary readings well clear of the abnormal range
                        x = x.max(cfg.cross_low.1 + 4.0);
                    }
                    x.clamp(*min, *max)
                };
                match observation_rate(&var.name) {
                    Some(p) => {
                        for h in 0..hours {
                            if rng.gen_bool(p) {
                                let x = value_at(rng, h);
                                cells.insert((v, h), RawValue::Number(x));
                            }
                        }
                    }
                    None => {
                        if rng.gen_bool(0.6) {
                            let h = rng.gen_range(0..hours.min(4));
                            let x = value_at(rng, h);
                            cells.insert((v, h), RawValue::Number(x));
                        }
                    }
                }
            }
            VariableKind::Categorical { categories } => {
                let p = observation_rate(&var.name).unwrap_or(0.1);
                let allowed: Vec<&String> = if v == r.pattern {
                    categories
                        .iter()
                        .filter(|c| cfg.pattern_categories.contains(c) == pattern)
                        .collect()
                } else {
                    categories.iter().collect()
                };
                for h in 0..hours {
                    if rng.gen_bool(p) {
                        let label = (*allowed.choose(rng).expect("non-empty")).clone();
                        cells.insert((v, h), RawValue::Label(label));
                    }
                }
            }
        }
    }

    let mut notes: Vec<NoteEvent> = Vec::new();
    let n_notes = rng.gen_range(2..=7);
    for _ in 0..n_notes {
        notes.push(NoteEvent {
            hour: rng.gen_range(0..hours) as f64,
            tokens: random_note(rng),
        });
    }

    let (normal_lo, normal_hi) = (cfg.cross_low.1 + 5.0, 100.0);
    let low_reading = |rng: &mut ChaCha8Rng| rng.gen_range(cfg.cross_low.0..cfg.cross_low.1);
    let mut event_hours: Vec<usize> = Vec::new();
    let pick_hour = |rng: &mut ChaCha8Rng, taken: &Vec<usize>| loop {
        let h = rng.gen_range(0..hours - 1);
        if !taken.iter().any(|&t| t.abs_diff(h) <= 1) {
            break h;
        }
    };
    // short event notes, e.g. "brief desaturation overnight"
    let add_token_note = |rng: &mut ChaCha8Rng, notes: &mut Vec<NoteEvent>, h: usize| {
        let len = rng.gen_range(1..=3);
        let mut tokens: Vec<String> = (0..len)
            .map(|_| FILLER_WORDS.choose(rng).expect("non-empty pool").to_string())
            .collect();
        let at = rng.gen_range(0..=tokens.len());
        tokens.insert(at, cfg.cross_token.clone());
        notes.push(NoteEvent {
            hour: h as f64,
            tokens,
        });
    };
    if cross {
        let h = pick_hour(rng, &event_hours);
        event_hours.push(h);
        cells.insert((r.cross, h), RawValue::Number(low_reading(rng)));
        cells.insert(
            (r.cross, h + 1),
            RawValue::Number(rng.gen_range(normal_lo..normal_hi)),
        );
        add_token_note(rng, &mut notes, h);
    }
    if decoy_token {
        let h = pick_hour(rng, &event_hours);
        event_hours.push(h);
        cells.insert(
            (r.cross, h),
            RawValue::Number(rng.gen_range(normal_lo..normal_hi)),
        );
        add_token_note(rng, &mut notes, h);
    }
    if decoy_reading {
        let h = pick_hour(rng, &event_hours);
        event_hours.push(h);
        cells.insert((r.cross, h), RawValue::Number(low_reading(rng)));
        cells.insert(
            (r.cross, h + 1),
            RawValue::Number(rng.gen_range(normal_lo..normal_hi)),
        );
    }
    notes.sort_by(|a, b| a.hour.total_cmp(&b.hour));

    let mut observations: Vec<Observation> = cells
        .into_iter()
        .map(|((v, h), value)| Observation {
            hour: h as f64,
            variable: schema.variables[v].name.clone(),
            value,
        })
        .collect();
    observations.sort_by(|a, b| a.hour.total_cmp(&b.hour));

    let noise = cfg.logit_noise * std_normal.sample(rng);
    let logit = cfg.trend_effect * slope
        + if pattern { cfg.pattern_effect } else { 0.0 }
        + if cross { cfg.cross_effect } else { 0.0 }
        + noise;
    let episode = ClinicalEpisode {
        id,
        label: 0,
        observations,
        note_events: notes,
    };
    let factors = PlantedFactors {
        slope,
        pattern,
        cross,
        decoy_token,
        decoy_reading,
        logit,
    };
    (episode, factors)
}

/// Intercept `b` with `mean(sigmoid(logit + b)) == target`.
fn calibrate_intercept(logits: &[f64], target: f64) -> f64 {
    let mean_at = |b: f64| logits.iter().map(|z| sigmoid(z + b)).sum::<f64>() / logits.len() as f64;
    let (mut lo, mut hi) = (-30.0, 30.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mean_at(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Generate `n_episodes` labelled episodes split 70/15/15 by episode.
pub fn generate_synthetic(
    n_episodes: usize,
    seed: u64,
    schema: &VariableSchema,
    cfg: &SignalConfig,
) -> Result<SyntheticDataset, DataError> {
    if n_episodes < 3 {
        return Err(DataError::InvalidSignal(format!(
            "need at least 3 episodes, got {n_episodes}"
        )));
    }
    if !(cfg.prevalence > 0.0 && cfg.prevalence < 1.0) {
        return Err(DataError::InvalidSignal(
            "prevalence must be in (0, 1)".into(),
        ));
    }
    if schema.hours < 8 {
        return Err(DataError::InvalidSignal(
            "synthetic episodes need at least 8 hours".into(),
        ));
    }
    let rates = [
        ("pattern_rate", cfg.pattern_rate),
        ("cross_rate", cfg.cross_rate),
        ("decoy_token_rate", cfg.decoy_token_rate),
        ("decoy_reading_rate", cfg.decoy_reading_rate),
    ];
    if let Some((name, _)) = rates.iter().find(|(_, p)| !(0.0..=1.0).contains(p)) {
        return Err(DataError::InvalidSignal(format!("{name} must lie in [0, 1]")));
    }
    if !(cfg.logit_noise >= 0.0) || !(cfg.cross_low.0 < cfg.cross_low.1) {
        return Err(DataError::InvalidSignal(
            "logit_noise must be non-negative and cross_low increasing".into(),
        ));
    }
    let resolved = resolve(schema, cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut drawn: Vec<(ClinicalEpisode, PlantedFactors)> = (0..n_episodes)
        .map(|i| draw_episode(&mut rng, format!("ep{i:06}"), schema, cfg, &resolved))
        .collect();
    let logits: Vec<f64> = drawn.iter().map(|(_, f)| f.logit).collect();
    let intercept = calibrate_intercept(&logits, cfg.prevalence);
    for (ep, f) in &mut drawn {
        ep.label = u8::from(rng.gen_bool(sigmoid(f.logit + intercept)));
    }

    let mut order: Vec<usize> = (0..n_episodes).collect();
    order.shuffle(&mut rng);
    let n_train = (n_episodes as f64 * 0.70).floor().max(1.0) as usize;
    let n_val = ((n_episodes as f64 * 0.15).floor() as usize).max(1);
    let factors = drawn.iter().map(|(e, f)| (e.id.clone(), *f)).collect();
    let mut slots: Vec<Option<ClinicalEpisode>> = drawn.into_iter().map(|(e, _)| Some(e)).collect();
    let mut take = |idx: &[usize]| -> Vec<ClinicalEpisode> {
        let mut v: Vec<ClinicalEpisode> = idx.iter().filter_map(|&i| slots[i].take()).collect();
        v.sort_by(|a, b| a.id.cmp(&b.id));
        v
    };
    let split = DatasetSplit {
        train: take(&order[..n_train]),
        validation: take(&order[n_train..n_train + n_val]),
        test: take(&order[n_train + n_val..]),
    };
    Ok(SyntheticDataset {
        split,
        factors,
        intercept,
    })
}
