use serde::{Deserialize, Serialize};

use super::TrainError;

fn check_inputs(scores: &[f64], labels: &[f64]) -> Result<(usize, usize), TrainError> {
    if scores.len() != labels.len() {
        return Err(TrainError::LengthMismatch {
            scores: scores.len(),
            labels: labels.len(),
        });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(TrainError::NonFinite("score"));
    }
    let mut pos = 0;
    for &y in labels {
        if y == 1.0 {
            pos += 1;
        } else if y != 0.0 {
            return Err(TrainError::InvalidLabel(y));
        }
    }
    Ok((pos, labels.len() - pos))
}

/// Indices sorted by descending score.
fn descending(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    idx
}

/// Area under the ROC curve as the Mann-Whitney statistic; tied pairs count 1/2.
pub fn auroc(scores: &[f64], labels: &[f64]) -> Result<f64, TrainError> {
    let (pos, neg) = check_inputs(scores, labels)?;
    if pos == 0 || neg == 0 {
        return Err(TrainError::SingleClass);
    }
    let idx = descending(scores);
    // walk tie groups from the top, counting positive-above-negative pairs
    let (mut concordant, mut negs_above) = (0.0, 0.0);
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        let (mut gp, mut gn) = (0.0, 0.0);
        while j < idx.len() && scores[idx[j]] == scores[idx[i]] {
            if labels[idx[j]] == 1.0 {
                gp += 1.0;
            } else {
                gn += 1.0;
            }
            j += 1;
        }
        concordant += gp * (neg as f64 - negs_above - gn) + 0.5 * gp * gn;
        negs_above += gn;
        i = j;
    }
    Ok(concordant / (pos as f64 * neg as f64))
}

/// Average precision: `Σ (R_k − R_{k−1}) · P_k` over descending distinct
/// score thresholds, ties grouped.
pub fn aucpr(scores: &[f64], labels: &[f64]) -> Result<f64, TrainError> {
    let (pos, _) = check_inputs(scores, labels)?;
    if pos == 0 {
        return Err(TrainError::NoPositives);
    }
    let idx = descending(scores);
    let (mut tp, mut seen, mut ap) = (0.0, 0.0, 0.0);
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        let mut gp = 0.0;
        while j < idx.len() && scores[idx[j]] == scores[idx[i]] {
            gp += labels[idx[j]];
            j += 1;
        }
        tp += gp;
        seen += (j - i) as f64;
        ap += (gp / pos as f64) * (tp / seen);
        i = j;
    }
    Ok(ap)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

/// Counts with `score >= threshold` predicted positive.
pub fn confusion(scores: &[f64], labels: &[f64], threshold: f64) -> Result<Confusion, TrainError> {
    check_inputs(scores, labels)?;
    let mut c = Confusion::default();
    for (&s, &y) in scores.iter().zip(labels) {
        match (s >= threshold, y == 1.0) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(c)
}

/// F1 at a fixed threshold; 0 when nothing is predicted positive or no
/// prediction is a true positive.
pub fn f1(scores: &[f64], labels: &[f64], threshold: f64) -> Result<f64, TrainError> {
    Ok(f1_from(&confusion(scores, labels, threshold)?))
}

fn f1_from(c: &Confusion) -> f64 {
    if c.tp == 0 {
        return 0.0;
    }
    let tp = c.tp as f64;
    2.0 * tp / (2.0 * tp + c.fp as f64 + c.fn_ as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub aucroc: f64,
    pub aucpr: f64,
    pub f1: f64,
    pub threshold: f64,
    pub confusion: Confusion,
}

pub const DEFAULT_THRESHOLD: f64 = 0.5;

pub fn evaluate(scores: &[f64], labels: &[f64], threshold: f64) -> Result<EvalResult, TrainError> {
    let confusion = confusion(scores, labels, threshold)?;
    Ok(EvalResult {
        aucroc: auroc(scores, labels)?,
        aucpr: aucpr(scores, labels)?,
        f1: f1_from(&confusion),
        threshold,
        confusion,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single run.
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        if values.is_empty() {
            return Self {
                mean: f64::NAN,
                std: f64::NAN,
            };
        }
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Self { mean, std }
    }
}

/// Mean and standard deviation of each metric across seeds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateResult {
    pub runs: usize,
    pub aucroc: MeanStd,
    pub aucpr: MeanStd,
    pub f1: MeanStd,
}

pub fn aggregate(results: &[EvalResult]) -> AggregateResult {
    let pick = |f: fn(&EvalResult) -> f64| MeanStd::of(&results.iter().map(f).collect::<Vec<_>>());
    AggregateResult {
        runs: results.len(),
        aucroc: pick(|r| r.aucroc),
        aucpr: pick(|r| r.aucpr),
        f1: pick(|r| r.f1),
    }
}
