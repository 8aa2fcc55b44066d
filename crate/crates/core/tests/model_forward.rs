use ehr_fusion::model::{
    encode_streams, forward_logits, lstm_forward, param_specs, read_checkpoint, sigmoid, stack,
    transformer_forward, write_checkpoint, Model, ModelConfig, ModelError, ModelInput, ModelKind,
};
use ehr_fusion::tensor::{grad_check, Tape, Tensor, TensorError, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tiny_config() -> ModelConfig {
    ModelConfig {
        hours: 8,
        notes_dim: 16,
        ts_dim: 76,
        notes_enc_dim: 8,
        ts_enc_dim: 8,
        model_dim: 32,
        layers: 1,
        heads: 4,
        ff_dim: 64,
        head_hidden: vec![8],
        lstm_hidden: 8,
        ..ModelConfig::default()
    }
}

fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(
        shape.to_vec(),
        (0..n).map(|_| rng.gen_range(-scale..scale)).collect(),
    )
    .unwrap()
}

fn random_input(rng: &mut ChaCha8Rng, cfg: &ModelConfig, id: usize) -> ModelInput {
    let mask: Vec<f64> = (0..cfg.hours)
        .map(|_| f64::from(u8::from(rng.gen_bool(0.5))))
        .collect();
    let mut notes = vec![0.0; cfg.hours * cfg.notes_dim];
    for h in 0..cfg.hours {
        if mask[h] == 1.0 {
            for j in 0..cfg.notes_dim {
                notes[h * cfg.notes_dim + j] = rng.gen_range(-1.0..1.0);
            }
        }
    }
    ModelInput {
        id: format!("e{id}"),
        label: f64::from(u8::from(rng.gen_bool(0.5))),
        notes,
        ts: (0..cfg.hours * cfg.ts_dim)
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect(),
        mask,
    }
}

fn tensor_err(e: ModelError) -> TensorError {
    match e {
        ModelError::Tensor(t) => t,
        other => panic!("unexpected model error {other}"),
    }
}

/// Loss as a function of one substituted input: parameter `slot`, or the
/// notes (`usize::MAX`) / series (`usize::MAX - 1`) batch tensors.
fn check_model(model: &Model, inputs: &[ModelInput], slot: usize) -> f64 {
    let refs: Vec<&ModelInput> = inputs.iter().collect();
    let batch = stack(&refs, model.config.hours).unwrap();
    let x = match slot {
        usize::MAX => batch.notes.clone(),
        s if s == usize::MAX - 1 => batch.ts.clone(),
        s => model.params.params()[s].value.clone(),
    };
    let f = |tape: &mut Tape, v: Var| -> Result<Var, TensorError> {
        let mut p = model.params.bind(tape, false);
        let mut notes = tape.constant(batch.notes.clone());
        let mut ts = tape.constant(batch.ts.clone());
        match slot {
            usize::MAX => notes = v,
            s if s == usize::MAX - 1 => ts = v,
            s => p.vars[s] = v,
        }
        let logits = forward_logits(tape, &p, model.kind, &model.config, notes, ts, &batch.mask)
            .map_err(tensor_err)?;
        tape.bce_with_logits(logits, &batch.labels)
    };
    grad_check(f, &x, 1e-5).unwrap()
}

#[test]
fn fusion_gradients_match_finite_differences_over_20_seeds() {
    let cfg = tiny_config();
    for seed in 0..20 {
        let model = Model::new(ModelKind::Fusion, cfg.clone(), seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let inputs: Vec<ModelInput> = (0..2).map(|i| random_input(&mut rng, &cfg, i)).collect();
        let mut worst: f64 = 0.0;
        for slot in (0..model.params.len()).chain([usize::MAX, usize::MAX - 1]) {
            worst = worst.max(check_model(&model, &inputs, slot));
        }
        assert!(worst < 1e-5, "seed {seed}: relative error {worst:e}");
    }
}

#[test]
fn baseline_gradients_match_finite_differences() {
    let cfg = tiny_config();
    for kind in [
        ModelKind::LstmVars,
        ModelKind::LstmFusion,
        ModelKind::TransformerVars,
        ModelKind::NotesOnly,
    ] {
        for seed in 0..3 {
            let model = Model::new(kind, cfg.clone(), seed).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(7 + seed);
            let inputs: Vec<ModelInput> = (0..2).map(|i| random_input(&mut rng, &cfg, i)).collect();
            for slot in (0..model.params.len()).chain([usize::MAX, usize::MAX - 1]) {
                let err = check_model(&model, &inputs, slot);
                assert!(err < 1e-5, "{kind} seed {seed} slot {slot}: {err:e}");
            }
        }
    }
}

#[test]
fn lstm_cell_gradient_over_random_sequences() {
    let cfg = tiny_config();
    let model = Model::new(ModelKind::LstmVars, cfg.clone(), 3).unwrap();
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_tensor(&mut rng, &[2, 5, cfg.ts_dim], 1.0);
        let err = grad_check(
            |tape, v| {
                let p = model.params.bind(tape, false);
                let h = lstm_forward(tape, &p, cfg.lstm_hidden, v).map_err(tensor_err)?;
                tape.sum_squares(h)
            },
            &x,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-5, "seed {seed}: {err:e}");
    }
}

#[test]
fn zero_lstm_weights_give_sigmoid_of_head_bias() {
    let cfg = tiny_config();
    let mut model = Model::new(ModelKind::LstmVars, cfg.clone(), 0).unwrap();
    for p in model.params.params_mut() {
        p.value.data_mut().fill(0.0);
    }
    model.params.get_mut("head.1.bias").unwrap().data_mut()[0] = 0.7;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let inputs: Vec<ModelInput> = (0..3).map(|i| random_input(&mut rng, &cfg, i)).collect();
    for p in model.predict(&inputs, 2).unwrap() {
        assert!((p - sigmoid(0.7)).abs() < 1e-15);
    }
}

#[test]
fn zero_fusion_params_except_head_bias_give_sigmoid_of_bias() {
    let cfg = tiny_config();
    let mut model = Model::new(ModelKind::Fusion, cfg.clone(), 0).unwrap();
    for p in model.params.params_mut() {
        p.value.data_mut().fill(0.0);
    }
    model.params.get_mut("head.1.bias").unwrap().data_mut()[0] = -1.3;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let inputs: Vec<ModelInput> = (0..3).map(|i| random_input(&mut rng, &cfg, i)).collect();
    for p in model.predict(&inputs, 8).unwrap() {
        assert!((p - sigmoid(-1.3)).abs() < 1e-15);
    }
}

#[test]
fn predictions_are_probabilities_and_deterministic() {
    let cfg = tiny_config();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let one = random_input(&mut rng, &cfg, 0);
    let inputs = vec![one.clone(), one.clone(), one];
    for kind in ModelKind::ALL {
        let model = Model::new(kind, cfg.clone(), 5).unwrap();
        let p = model.predict(&inputs, 3).unwrap();
        assert!(p.iter().all(|&x| x > 0.0 && x < 1.0));
        assert_eq!(p[0], p[1]);
        assert_eq!(p[1], p[2]);
        assert_eq!(p, model.predict(&inputs, 1).unwrap());
    }
}

#[test]
fn notes_only_ignores_series() {
    let cfg = tiny_config();
    let model = Model::new(ModelKind::NotesOnly, cfg.clone(), 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let a = random_input(&mut rng, &cfg, 0);
    let mut b = a.clone();
    b.ts.iter_mut().for_each(|x| *x = rng.gen_range(-5.0..5.0));
    assert_eq!(
        model.predict(&[a], 1).unwrap(),
        model.predict(&[b], 1).unwrap()
    );
}

#[test]
fn encoders_are_per_hour_and_linear_at_zero() {
    let cfg = tiny_config();
    let mut model = Model::new(ModelKind::Fusion, cfg.clone(), 9).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let notes = random_tensor(&mut rng, &[1, 8, 16], 1.0);
    let ts = random_tensor(&mut rng, &[1, 8, 76], 1.0);
    let run = |model: &Model, notes: &Tensor, ts: &Tensor| {
        let mut tape = Tape::new();
        let p = model.params.bind(&mut tape, false);
        let (n, t) = (tape.constant(notes.clone()), tape.constant(ts.clone()));
        let s = encode_streams(&mut tape, &p, n, t).unwrap();
        (
            tape.value(s.notes).clone(),
            tape.value(s.ts).clone(),
            tape.value(s.multimodal).clone(),
        )
    };
    let (i_notes, i_ts, i_mm) = run(&model, &notes, &ts);
    assert_eq!(i_notes.shape(), &[1, 8, 8]);
    assert_eq!(i_ts.shape(), &[1, 8, 8]);
    assert_eq!(i_mm.shape(), &[1, 8, 32]);

    // perturb hour 6 only: rows of other hours stay put
    let mut notes2 = notes.clone();
    notes2.data_mut()[6 * 16 + 3] += 0.5;
    let mut ts2 = ts.clone();
    ts2.data_mut()[6 * 76 + 10] -= 0.5;
    let (_, _, i_mm2) = run(&model, &notes2, &ts2);
    for h in 0..8 {
        let row = |t: &Tensor| t.data()[h * 32..(h + 1) * 32].to_vec();
        assert_eq!(row(&i_mm) == row(&i_mm2), h != 6, "hour {h}");
    }

    for p in model.params.params_mut() {
        if p.name.ends_with(".bias") {
            p.value.data_mut().fill(0.0);
        }
    }
    let zeros_n = Tensor::zeros(&[1, 8, 16]);
    let zeros_t = Tensor::zeros(&[1, 8, 76]);
    let (a, b, c) = run(&model, &zeros_n, &zeros_t);
    assert!([a, b, c].iter().all(|t| t.data().iter().all(|&x| x == 0.0)));
}

fn cls_output(model: &Model, tokens: &Tensor) -> Vec<f64> {
    let mut tape = Tape::new();
    let p = model.params.bind(&mut tape, false);
    let x = tape.constant(tokens.clone());
    let out = transformer_forward(&mut tape, &p, &model.config, x).unwrap();
    tape.value(out).data().to_vec()
}

#[test]
fn hour_permutation_invariance_holds_only_without_positions() {
    let mut cfg = ModelConfig {
        hours: 48,
        layers: 2,
        ..tiny_config()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let tokens = random_tensor(&mut rng, &[1, 48, 32], 1.0);
    let mut perm: Vec<usize> = (0..48).collect();
    perm.reverse();
    perm.swap(3, 17);
    let mut permuted = tokens.clone();
    for (dst, &src) in perm.iter().enumerate() {
        permuted.data_mut()[dst * 32..(dst + 1) * 32]
            .copy_from_slice(&tokens.data()[src * 32..(src + 1) * 32]);
    }
    let diff = |a: &[f64], b: &[f64]| {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).powi(2))
            .sum::<f64>()
            .sqrt()
    };

    cfg.positions = false;
    let model = Model::new(ModelKind::Fusion, cfg.clone(), 1).unwrap();
    let d = diff(&cls_output(&model, &tokens), &cls_output(&model, &permuted));
    assert!(d < 1e-9, "without positions: {d:e}");

    cfg.positions = true;
    let model = Model {
        config: cfg,
        ..model
    };
    let d = diff(&cls_output(&model, &tokens), &cls_output(&model, &permuted));
    assert!(d > 1e-6, "with positions: {d:e}");
}

#[test]
fn parameter_count_is_a_function_of_config() {
    let cfg = ModelConfig::default();
    let count = |kind| {
        param_specs(kind, &cfg)
            .iter()
            .map(|s| s.shape.iter().product::<usize>())
            .sum::<usize>()
    };
    let d = 128;
    let layer = 4 * (d * d + d) + 2 * 2 * d + (d * 512 + 512) + (512 * d + d);
    let head = |fan_in: usize| fan_in * 64 + 64 + 64 + 1;
    let fusion = (768 * 64 + 64)
        + (76 * 64 + 64)
        + (64 * 64 + 64)
        + (844 * 128 + 128)
        + d
        + 2 * layer
        + head(128 + 768);
    assert_eq!(count(ModelKind::Fusion), fusion);
    assert_eq!(count(ModelKind::NotesOnly), head(768));
    assert_eq!(
        count(ModelKind::LstmVars),
        76 * 256 + 64 * 256 + 256 + head(64)
    );
    assert_eq!(
        count(ModelKind::LstmFusion),
        844 * 256 + 64 * 256 + 256 + head(64)
    );
    assert_eq!(
        count(ModelKind::TransformerVars),
        (76 * 64 + 64) + (64 * 128 + 128) + d + 2 * layer + head(128)
    );
    let model = Model::new(ModelKind::Fusion, cfg, 0).unwrap();
    assert_eq!(model.params.count(), fusion);
}

#[test]
fn lstm_forget_bias_starts_at_one() {
    let model = Model::new(ModelKind::LstmVars, tiny_config(), 0).unwrap();
    let b = model.params.get("lstm.bias").unwrap().data().to_vec();
    assert_eq!(&b[..8], &[0.0; 8]);
    assert_eq!(&b[8..16], &[1.0; 8]);
    assert_eq!(&b[16..], &[0.0; 16]);
}

#[test]
fn invalid_configs_and_kinds_are_rejected() {
    let bad_heads = ModelConfig {
        heads: 3,
        ..tiny_config()
    };
    assert!(matches!(
        Model::new(ModelKind::Fusion, bad_heads, 0),
        Err(ModelError::InvalidConfig(_))
    ));
    let odd = ModelConfig {
        model_dim: 33,
        heads: 3,
        ..tiny_config()
    };
    assert!(matches!(
        Model::new(ModelKind::Fusion, odd, 0),
        Err(ModelError::OddPositionDim(33))
    ));
    assert!(matches!(
        "gru".parse::<ModelKind>(),
        Err(ModelError::UnknownKind(_))
    ));
    assert_eq!(
        "lstm_fusion".parse::<ModelKind>().unwrap(),
        ModelKind::LstmFusion
    );
}

#[test]
fn wrong_input_shapes_are_rejected() {
    let cfg = tiny_config();
    let model = Model::new(ModelKind::Fusion, cfg.clone(), 0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut x = random_input(&mut rng, &cfg, 0);
    x.ts.truncate(8 * 75);
    assert!(model.predict(&[x], 1).is_err());
}

#[test]
fn checkpoint_round_trips_exactly() {
    let cfg = tiny_config();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    for kind in ModelKind::ALL {
        let model = Model::new(kind, cfg.clone(), 17).unwrap();
        write_checkpoint(&path, &model, 17, 42, serde_json::json!({"notes": "hash"})).unwrap();
        let back = read_checkpoint(&path).unwrap();
        assert_eq!(back.model, model);
        assert_eq!((back.seed, back.step), (17, 42));
        assert_eq!(back.extra["notes"], "hash");
    }
    let mut bytes = std::fs::read(&path).unwrap();
    bytes.truncate(bytes.len() - 8);
    std::fs::write(&path, bytes).unwrap();
    assert!(matches!(
        read_checkpoint(&path),
        Err(ModelError::Checkpoint(_))
    ));
}
