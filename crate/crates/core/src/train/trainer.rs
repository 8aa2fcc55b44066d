use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::metrics::{evaluate, EvalResult, DEFAULT_THRESHOLD};
use super::optim::{adam_step, AdamConfig, AdamState};
use super::TrainError;
use crate::model::{forward_logits, stack, Batch, Bound, Model, ModelError, ModelInput};
use crate::tensor::{Tape, TensorError, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub adam: AdamConfig,
    /// Coefficient of the squared-norm penalty on weight matrices.
    pub l2: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without a validation AUCPR improvement before stopping.
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            adam: AdamConfig::default(),
            l2: 1e-5,
            batch_size: 32,
            max_epochs: 30,
            patience: 5,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let a = &self.adam;
        let positive = [("lr", a.lr), ("eps", a.eps)];
        if let Some((name, _)) = positive.iter().find(|(_, v)| !(*v > 0.0)) {
            return Err(TrainError::InvalidConfig(format!(
                "{name} must be positive"
            )));
        }
        if !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) {
            return Err(TrainError::InvalidConfig("betas must lie in [0, 1)".into()));
        }
        if !(self.l2 >= 0.0) {
            return Err(TrainError::InvalidConfig("l2 must be non-negative".into()));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(TrainError::InvalidConfig(
                "batch_size and max_epochs must be positive".into(),
            ));
        }
        if self.patience > self.max_epochs {
            return Err(TrainError::InvalidConfig(
                "patience exceeds max_epochs".into(),
            ));
        }
        Ok(())
    }
}

/// `λ · Σ ‖W‖²` over the given weight variables.
pub fn l2_penalty(tape: &mut Tape, weights: &[Var], lambda: f64) -> Result<Var, TensorError> {
    let mut total = tape.constant(crate::tensor::Tensor::scalar(0.0));
    for &w in weights {
        let s = tape.sum_squares(w)?;
        total = tape.add(total, s)?;
    }
    tape.scale(total, lambda)
}

/// Mean binary cross-entropy on logits plus the L2 penalty.
pub fn loss(
    tape: &mut Tape,
    logits: Var,
    labels: &[f64],
    weights: &[Var],
    lambda: f64,
) -> Result<Var, TensorError> {
    let bce = tape.bce_with_logits(logits, labels)?;
    if lambda == 0.0 {
        return Ok(bce);
    }
    let pen = l2_penalty(tape, weights, lambda)?;
    tape.add(bce, pen)
}

/// Training loss of one batch with every parameter as a tape leaf.
pub fn batch_loss<'a>(
    tape: &mut Tape,
    model: &'a Model,
    batch: &Batch,
    lambda: f64,
) -> Result<(Var, Bound<'a>), ModelError> {
    let p = model.params.bind(tape, true);
    let notes = tape.constant(batch.notes.clone());
    let ts = tape.constant(batch.ts.clone());
    let logits = forward_logits(tape, &p, model.kind, &model.config, notes, ts, &batch.mask)?;
    let weights: Vec<Var> = model
        .params
        .params()
        .iter()
        .zip(&p.vars)
        .filter(|(param, _)| param.decay)
        .map(|(_, &v)| v)
        .collect();
    let l = loss(tape, logits, &batch.labels, &weights, lambda)?;
    Ok((l, p))
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogEvent {
    pub epoch: usize,
    pub split: String,
    pub metric: String,
    pub value: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation: EvalResult,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the best validation AUCPR.
    pub model: Model,
    pub best_epoch: usize,
    pub epochs_run: usize,
    /// Optimizer steps taken up to the best epoch.
    pub steps: u64,
    pub best_validation: EvalResult,
    pub history: Vec<EpochRecord>,
}

fn event(epoch: usize, split: &str, metric: &str, value: f64, seed: u64) -> LogEvent {
    LogEvent {
        epoch,
        split: split.into(),
        metric: metric.into(),
        value,
        seed,
    }
}

/// Train with Adam and early stopping on validation AUCPR. Hyperparameters
/// are logged as epoch-0 `config` events.
pub fn train(
    mut model: Model,
    train_set: &[ModelInput],
    validation: &[ModelInput],
    cfg: &TrainConfig,
    log: &mut dyn FnMut(&LogEvent),
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(TrainError::EmptySplit("train"));
    }
    if validation.is_empty() {
        return Err(TrainError::EmptySplit("validation"));
    }
    let seed = cfg.seed;
    for (name, value) in [
        ("lr", cfg.adam.lr),
        ("beta1", cfg.adam.beta1),
        ("beta2", cfg.adam.beta2),
        ("eps", cfg.adam.eps),
        ("l2", cfg.l2),
        ("batch_size", cfg.batch_size as f64),
        ("max_epochs", cfg.max_epochs as f64),
        ("patience", cfg.patience as f64),
    ] {
        log(&event(0, "config", name, value, seed));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = AdamState::new(&model.params);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut best: Option<(Model, usize, u64, EvalResult)> = None;
    let mut history = Vec::new();
    let mut stale = 0;
    let mut epochs_run = 0;
    let val_labels: Vec<f64> = validation.iter().map(|x| x.label).collect();

    for epoch in 1..=cfg.max_epochs {
        epochs_run = epoch;
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let refs: Vec<&ModelInput> = chunk.iter().map(|&i| &train_set[i]).collect();
            let batch = stack(&refs, model.config.hours)?;
            let mut tape = Tape::new();
            let diverged = |detail: String| TrainError::Diverged {
                epoch,
                step: state.t + 1,
                detail,
            };
            let (l, p) = batch_loss(&mut tape, &model, &batch, cfg.l2).map_err(|e| match e {
                ModelError::Tensor(t @ TensorError::NonFinite { .. }) => diverged(t.to_string()),
                other => other.into(),
            })?;
            let value = tape.value(l).data()[0];
            if !value.is_finite() {
                return Err(diverged(format!("loss {value}")));
            }
            total += value * chunk.len() as f64;
            let grads = tape.backward(l)?;
            let refs: Vec<_> = p.vars.iter().map(|&v| grads.get(v)).collect();
            adam_step(&mut model.params, &refs, &mut state, &cfg.adam);
        }
        if model.params.params().iter().any(|p| !p.value.is_finite()) {
            return Err(TrainError::Diverged {
                epoch,
                step: state.t,
                detail: "non-finite parameters".into(),
            });
        }
        let train_loss = total / train_set.len() as f64;
        let scores = model.predict(validation, 256)?;
        let val = evaluate(&scores, &val_labels, DEFAULT_THRESHOLD)?;
        log(&event(epoch, "train", "loss", train_loss, seed));
        log(&event(epoch, "validation", "aucroc", val.aucroc, seed));
        log(&event(epoch, "validation", "aucpr", val.aucpr, seed));
        log(&event(epoch, "validation", "f1", val.f1, seed));
        history.push(EpochRecord {
            epoch,
            train_loss,
            validation: val,
        });
        if best.as_ref().map_or(true, |b| val.aucpr > b.3.aucpr) {
            best = Some((model.clone(), epoch, state.t, val));
            stale = 0;
        } else {
            stale += 1;
        }
        if stale >= cfg.patience {
            break;
        }
    }
    let (model, best_epoch, steps, best_validation) = best.expect("at least one epoch");
    Ok(TrainOutcome {
        model,
        best_epoch,
        epochs_run,
        steps,
        best_validation,
        history,
    })
}
