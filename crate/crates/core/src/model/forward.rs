use super::params::Bound;
use super::{sinusoidal_positions, ModelConfig, ModelError, ModelKind, NotesPooling};
use crate::tensor::{Tape, Tensor, Var};

/// `x · W + b` over the last axis.
pub(crate) fn linear(tape: &mut Tape, p: &Bound, prefix: &str, x: Var) -> Result<Var, ModelError> {
    let y = tape.matmul(x, p.p(&format!("{prefix}.weight")))?;
    Ok(tape.add(y, p.p(&format!("{prefix}.bias")))?)
}

fn layer_norm(tape: &mut Tape, p: &Bound, prefix: &str, x: Var) -> Result<Var, ModelError> {
    Ok(tape.layer_norm(
        x,
        p.p(&format!("{prefix}.gamma")),
        p.p(&format!("{prefix}.beta")),
    )?)
}

/// Encoder outputs for one batch: `I_notes`, `I_ts`, `I_MM`, each `[B, L, ·]`.
pub struct EncodedStreams {
    pub notes: Var,
    pub ts: Var,
    pub multimodal: Var,
}

/// The three per-hour encoders of the fusion model.
pub fn encode_streams(
    tape: &mut Tape,
    p: &Bound,
    notes: Var,
    ts: Var,
) -> Result<EncodedStreams, ModelError> {
    let i_notes = linear(tape, p, "notes_enc", notes)?;
    let i_ts = ts_encoder(tape, p, ts)?;
    let multimodal = multimodal_encoder(tape, p, notes, ts)?;
    Ok(EncodedStreams {
        notes: i_notes,
        ts: i_ts,
        multimodal,
    })
}

fn ts_encoder(tape: &mut Tape, p: &Bound, ts: Var) -> Result<Var, ModelError> {
    let h = linear(tape, p, "ts_enc.0", ts)?;
    let h = tape.relu(h)?;
    linear(tape, p, "ts_enc.1", h)
}

fn multimodal_encoder(tape: &mut Tape, p: &Bound, notes: Var, ts: Var) -> Result<Var, ModelError> {
    let joined = tape.concat(&[notes, ts], 2)?;
    linear(tape, p, "mm_enc", joined)
}

/// Multi-head self-attention over `[B, S, D]`; also returns the per-head
/// attention weights `[B, S, S]`.
pub(crate) fn self_attention(
    tape: &mut Tape,
    p: &Bound,
    prefix: &str,
    x: Var,
    heads: usize,
) -> Result<(Var, Vec<Var>), ModelError> {
    let d = *tape.shape(x).last().expect("rank 3");
    let dh = d / heads;
    let q = linear(tape, p, &format!("{prefix}.q"), x)?;
    let k = linear(tape, p, &format!("{prefix}.k"), x)?;
    let v = linear(tape, p, &format!("{prefix}.v"), x)?;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut contexts = Vec::with_capacity(heads);
    let mut weights = Vec::with_capacity(heads);
    for h in 0..heads {
        let qh = tape.narrow(q, 2, h * dh, dh)?;
        let kh = tape.narrow(k, 2, h * dh, dh)?;
        let vh = tape.narrow(v, 2, h * dh, dh)?;
        let scores = tape.matmul_t(qh, kh)?;
        let scores = tape.scale(scores, scale)?;
        let att = tape.softmax(scores)?;
        contexts.push(tape.matmul(att, vh)?);
        weights.push(att);
    }
    let ctx = if heads == 1 {
        contexts[0]
    } else {
        tape.concat(&contexts, 2)?
    };
    Ok((linear(tape, p, &format!("{prefix}.o"), ctx)?, weights))
}

/// Post-norm encoder layer.
fn encoder_layer(
    tape: &mut Tape,
    p: &Bound,
    layer: usize,
    x: Var,
    heads: usize,
) -> Result<Var, ModelError> {
    let (a, _) = self_attention(tape, p, &format!("layers.{layer}.attn"), x, heads)?;
    let x = tape.add(x, a)?;
    let x = layer_norm(tape, p, &format!("layers.{layer}.ln1"), x)?;
    let f = linear(tape, p, &format!("layers.{layer}.ff1"), x)?;
    let f = tape.relu(f)?;
    let f = linear(tape, p, &format!("layers.{layer}.ff2"), f)?;
    let x = tape.add(x, f)?;
    layer_norm(tape, p, &format!("layers.{layer}.ln2"), x)
}

/// Prepend CLS, add positions, run the encoder stack and return the CLS
/// output `[B, D]`.
pub fn transformer_forward(
    tape: &mut Tape,
    p: &Bound,
    cfg: &ModelConfig,
    tokens: Var,
) -> Result<Var, ModelError> {
    let shape = tape.shape(tokens).to_vec();
    let (b, l, d) = (shape[0], shape[1], shape[2]);
    let zeros = tape.constant(Tensor::zeros(&[b, 1, d]));
    let cls = tape.add(zeros, p.p("cls"))?;
    let mut x = tape.concat(&[cls, tokens], 1)?;
    if cfg.positions {
        let pe = tape.constant(sinusoidal_positions(l + 1, d)?);
        x = tape.add(x, pe)?;
    }
    for layer in 0..cfg.layers {
        x = encoder_layer(tape, p, layer, x, cfg.heads)?;
    }
    let first = tape.narrow(x, 1, 0, 1)?;
    Ok(tape.reshape(first, &[b, d])?)
}

/// Pool `[B, L, D1]` note embeddings to `[B, D1]` given a `[B, L]` presence mask.
pub fn pool_notes(
    tape: &mut Tape,
    cfg: &ModelConfig,
    notes: Var,
    mask: &[f64],
) -> Result<Var, ModelError> {
    let shape = tape.shape(notes).to_vec();
    let (b, l, d) = (shape[0], shape[1], shape[2]);
    let mut w = vec![0.0; b * l];
    for i in 0..b {
        let row = &mask[i * l..(i + 1) * l];
        match cfg.pooling {
            NotesPooling::MaskedMean => {
                let n: f64 = row.iter().sum();
                if n > 0.0 {
                    for (wt, &m) in w[i * l..(i + 1) * l].iter_mut().zip(row) {
                        *wt = m / n;
                    }
                }
            }
            NotesPooling::Mean => w[i * l..(i + 1) * l].fill(1.0 / l as f64),
        }
    }
    let w = tape.constant(Tensor::new(vec![b, 1, l], w)?);
    let pooled = tape.matmul(w, notes)?;
    Ok(tape.reshape(pooled, &[b, d])?)
}

fn head(tape: &mut Tape, p: &Bound, cfg: &ModelConfig, x: Var) -> Result<Var, ModelError> {
    let mut h = x;
    for i in 0..cfg.head_hidden.len() {
        h = linear(tape, p, &format!("head.{i}"), h)?;
        h = tape.relu(h)?;
    }
    let out = linear(tape, p, &format!("head.{}", cfg.head_hidden.len()), h)?;
    let b = tape.shape(out)[0];
    Ok(tape.reshape(out, &[b])?)
}

/// Single-layer LSTM over `[B, L, in]`; returns the last hidden state `[B, H]`.
/// Gate blocks are ordered input, forget, candidate, output.
pub fn lstm_forward(tape: &mut Tape, p: &Bound, hidden: usize, x: Var) -> Result<Var, ModelError> {
    let shape = tape.shape(x).to_vec();
    let (b, l) = (shape[0], shape[1]);
    let xw = tape.matmul(x, p.p("lstm.wx"))?;
    let xw = tape.add(xw, p.p("lstm.bias"))?;
    let mut h = tape.constant(Tensor::zeros(&[b, hidden]));
    let mut c = tape.constant(Tensor::zeros(&[b, hidden]));
    for t in 0..l {
        let xt = tape.narrow(xw, 1, t, 1)?;
        let xt = tape.reshape(xt, &[b, 4 * hidden])?;
        let hw = tape.matmul(h, p.p("lstm.wh"))?;
        let gates = tape.add(xt, hw)?;
        let block = |tape: &mut Tape, k: usize| tape.narrow(gates, 1, k * hidden, hidden);
        let i = block(tape, 0)?;
        let i = tape.sigmoid(i)?;
        let f = block(tape, 1)?;
        let f = tape.sigmoid(f)?;
        let g = block(tape, 2)?;
        let g = tape.tanh(g)?;
        let o = block(tape, 3)?;
        let o = tape.sigmoid(o)?;
        let fc = tape.mul(f, c)?;
        let ig = tape.mul(i, g)?;
        c = tape.add(fc, ig)?;
        let tc = tape.tanh(c)?;
        h = tape.mul(o, tc)?;
    }
    Ok(h)
}

/// Logits `[B]` of any model kind for batched inputs `notes: [B, L, D1]`,
/// `ts: [B, L, D2]` and a `[B, L]` note presence mask.
pub fn forward_logits(
    tape: &mut Tape,
    p: &Bound,
    kind: ModelKind,
    cfg: &ModelConfig,
    notes: Var,
    ts: Var,
    mask: &[f64],
) -> Result<Var, ModelError> {
    let (ns, ts_shape) = (tape.shape(notes).to_vec(), tape.shape(ts).to_vec());
    let expect_n = [ns.first().copied().unwrap_or(0), cfg.hours, cfg.notes_dim];
    let expect_t = [expect_n[0], cfg.hours, cfg.ts_dim];
    if ns != expect_n || ts_shape != expect_t || mask.len() != expect_n[0] * cfg.hours {
        return Err(ModelError::InputShape {
            notes: ns,
            ts: ts_shape,
            mask: mask.len(),
        });
    }
    match kind {
        ModelKind::Fusion => {
            let mm = multimodal_encoder(tape, p, notes, ts)?;
            let cls = transformer_forward(tape, p, cfg, mm)?;
            let pooled = pool_notes(tape, cfg, notes, mask)?;
            let joined = tape.concat(&[cls, pooled], 1)?;
            head(tape, p, cfg, joined)
        }
        ModelKind::TransformerVars => {
            let enc = ts_encoder(tape, p, ts)?;
            let cls = transformer_forward(tape, p, cfg, enc)?;
            head(tape, p, cfg, cls)
        }
        ModelKind::NotesOnly => {
            let pooled = pool_notes(tape, cfg, notes, mask)?;
            head(tape, p, cfg, pooled)
        }
        ModelKind::LstmVars => {
            let h = lstm_forward(tape, p, cfg.lstm_hidden, ts)?;
            head(tape, p, cfg, h)
        }
        ModelKind::LstmFusion => {
            let joined = tape.concat(&[notes, ts], 2)?;
            let h = lstm_forward(tape, p, cfg.lstm_hidden, joined)?;
            head(tape, p, cfg, h)
        }
    }
}
