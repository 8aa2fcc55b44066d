use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ModelError, ModelKind};
use crate::model::ModelConfig;
use crate::tensor::{Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Init {
    /// Uniform in ±sqrt(6 / (fan_in + fan_out)).
    Glorot {
        fan_in: usize,
        fan_out: usize,
    },
    Zeros,
    Ones,
    /// LSTM gate bias: zeros except 1.0 on the forget block.
    ForgetBias {
        hidden: usize,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    /// Included in the L2 penalty.
    pub decay: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
    pub decay: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamStore {
    params: Vec<Param>,
    index: HashMap<String, usize>,
}

impl ParamStore {
    pub fn from_params(params: Vec<Param>) -> Result<Self, ModelError> {
        let mut index = HashMap::new();
        for (i, p) in params.iter().enumerate() {
            if index.insert(p.name.clone(), i).is_some() {
                return Err(ModelError::Checkpoint(format!(
                    "duplicate parameter {}",
                    p.name
                )));
            }
        }
        Ok(Self { params, index })
    }

    pub fn init(specs: &[ParamSpec], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = specs
            .iter()
            .map(|s| {
                let n: usize = s.shape.iter().product();
                let data = match s.init {
                    Init::Glorot { fan_in, fan_out } => {
                        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                        (0..n).map(|_| rng.gen_range(-limit..limit)).collect()
                    }
                    Init::Zeros => vec![0.0; n],
                    Init::Ones => vec![1.0; n],
                    Init::ForgetBias { hidden } => (0..n)
                        .map(|i| {
                            if (hidden..2 * hidden).contains(&i) {
                                1.0
                            } else {
                                0.0
                            }
                        })
                        .collect(),
                };
                Param {
                    name: s.name.clone(),
                    value: Tensor::new(s.shape.clone(), data).expect("spec shape matches data"),
                    decay: s.decay,
                }
            })
            .collect();
        Self::from_params(params).expect("spec names are unique")
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param] {
        &mut self.params
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index.get(name).map(|&i| &self.params[i].value)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.index.get(name).map(|&i| &mut self.params[i].value)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn count(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }

    /// Put every parameter on the tape, as leaves or as constants.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> Bound<'_> {
        let vars = self
            .params
            .iter()
            .map(|p| {
                if trainable {
                    tape.leaf(p.value.clone())
                } else {
                    tape.constant(p.value.clone())
                }
            })
            .collect();
        Bound { store: self, vars }
    }
}

/// Tape handles for a [`ParamStore`].
pub struct Bound<'a> {
    store: &'a ParamStore,
    pub vars: Vec<Var>,
}

impl Bound<'_> {
    pub fn p(&self, name: &str) -> Var {
        let i = self.store.index[name];
        self.vars[i]
    }
}

fn linear_specs(specs: &mut Vec<ParamSpec>, prefix: &str, fan_in: usize, fan_out: usize) {
    specs.push(ParamSpec {
        name: format!("{prefix}.weight"),
        shape: vec![fan_in, fan_out],
        init: Init::Glorot { fan_in, fan_out },
        decay: true,
    });
    specs.push(ParamSpec {
        name: format!("{prefix}.bias"),
        shape: vec![fan_out],
        init: Init::Zeros,
        decay: false,
    });
}

fn norm_specs(specs: &mut Vec<ParamSpec>, prefix: &str, dim: usize) {
    specs.push(ParamSpec {
        name: format!("{prefix}.gamma"),
        shape: vec![dim],
        init: Init::Ones,
        decay: false,
    });
    specs.push(ParamSpec {
        name: format!("{prefix}.beta"),
        shape: vec![dim],
        init: Init::Zeros,
        decay: false,
    });
}

fn transformer_specs(specs: &mut Vec<ParamSpec>, cfg: &ModelConfig) {
    let d = cfg.model_dim;
    specs.push(ParamSpec {
        name: "cls".into(),
        shape: vec![d],
        init: Init::Glorot {
            fan_in: d,
            fan_out: d,
        },
        decay: false,
    });
    for l in 0..cfg.layers {
        for proj in ["q", "k", "v", "o"] {
            linear_specs(specs, &format!("layers.{l}.attn.{proj}"), d, d);
        }
        norm_specs(specs, &format!("layers.{l}.ln1"), d);
        linear_specs(specs, &format!("layers.{l}.ff1"), d, cfg.ff_dim);
        linear_specs(specs, &format!("layers.{l}.ff2"), cfg.ff_dim, d);
        norm_specs(specs, &format!("layers.{l}.ln2"), d);
    }
}

fn lstm_specs(specs: &mut Vec<ParamSpec>, input: usize, hidden: usize) {
    specs.push(ParamSpec {
        name: "lstm.wx".into(),
        shape: vec![input, 4 * hidden],
        init: Init::Glorot {
            fan_in: input,
            fan_out: 4 * hidden,
        },
        decay: true,
    });
    specs.push(ParamSpec {
        name: "lstm.wh".into(),
        shape: vec![hidden, 4 * hidden],
        init: Init::Glorot {
            fan_in: hidden,
            fan_out: 4 * hidden,
        },
        decay: true,
    });
    specs.push(ParamSpec {
        name: "lstm.bias".into(),
        shape: vec![4 * hidden],
        init: Init::ForgetBias { hidden },
        decay: false,
    });
}

fn head_specs(specs: &mut Vec<ParamSpec>, input: usize, hidden: &[usize]) {
    let mut fan_in = input;
    for (i, &h) in hidden.iter().enumerate() {
        linear_specs(specs, &format!("head.{i}"), fan_in, h);
        fan_in = h;
    }
    linear_specs(specs, &format!("head.{}", hidden.len()), fan_in, 1);
}

/// Parameter layout of one model kind; names and shapes depend only on the config.
pub fn param_specs(kind: ModelKind, cfg: &ModelConfig) -> Vec<ParamSpec> {
    let mut specs = Vec::new();
    match kind {
        ModelKind::Fusion => {
            linear_specs(&mut specs, "notes_enc", cfg.notes_dim, cfg.notes_enc_dim);
            linear_specs(&mut specs, "ts_enc.0", cfg.ts_dim, cfg.ts_enc_dim);
            linear_specs(&mut specs, "ts_enc.1", cfg.ts_enc_dim, cfg.ts_enc_dim);
            linear_specs(
                &mut specs,
                "mm_enc",
                cfg.notes_dim + cfg.ts_dim,
                cfg.model_dim,
            );
            transformer_specs(&mut specs, cfg);
            head_specs(&mut specs, cfg.model_dim + cfg.notes_dim, &cfg.head_hidden);
        }
        ModelKind::TransformerVars => {
            linear_specs(&mut specs, "ts_enc.0", cfg.ts_dim, cfg.ts_enc_dim);
            linear_specs(&mut specs, "ts_enc.1", cfg.ts_enc_dim, cfg.model_dim);
            transformer_specs(&mut specs, cfg);
            head_specs(&mut specs, cfg.model_dim, &cfg.head_hidden);
        }
        ModelKind::NotesOnly => head_specs(&mut specs, cfg.notes_dim, &cfg.head_hidden),
        ModelKind::LstmVars => {
            lstm_specs(&mut specs, cfg.ts_dim, cfg.lstm_hidden);
            head_specs(&mut specs, cfg.lstm_hidden, &cfg.head_hidden);
        }
        ModelKind::LstmFusion => {
            lstm_specs(&mut specs, cfg.notes_dim + cfg.ts_dim, cfg.lstm_hidden);
            head_specs(&mut specs, cfg.lstm_hidden, &cfg.head_hidden);
        }
    }
    specs
}
