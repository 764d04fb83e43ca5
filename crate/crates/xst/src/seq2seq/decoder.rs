use crate::numcore::{Bound, NodeId, RngStream, Scalar, Tape, Tensor};
use crate::{Error, Result};

use super::config::DecoderConfig;

/// Decoder recurrent state between steps: per-layer LSTM hidden and cell
/// vectors plus the previous attentional vector (input feeding). All handles
/// point into one tape; states from different tapes must not be mixed.
#[derive(Clone)]
pub struct DecState {
    pub h: Vec<NodeId>,
    pub c: Vec<NodeId>,
    pub att: NodeId,
}

impl DecState {
    /// All-zero start state. Input feeding supplies encoder information from
    /// the first step onward, so no bridge from the encoder is needed.
    pub fn initial<S: Scalar>(tape: &mut Tape<S>, cfg: &DecoderConfig) -> DecState {
        let mut h = Vec::with_capacity(cfg.lstm_layers);
        let mut c = Vec::with_capacity(cfg.lstm_layers);
        for _ in 0..cfg.lstm_layers {
            h.push(tape.leaf(Tensor::zeros(&[cfg.lstm_hidden])));
            c.push(tape.leaf(Tensor::zeros(&[cfg.lstm_hidden])));
        }
        let att = tape.leaf(Tensor::zeros(&[cfg.att_dim()]));
        DecState { h, c, att }
    }
}

/// Variational dropout masks for one decoded sequence: the same mask tensors
/// apply at every step. `between[l]` drops the output of LSTM layer l on its
/// way into layer l+1 (the top layer has none, so recurrence and attention
/// see undropped states); `att` drops the attentional vector right before the
/// output projection, while the undropped vector is what feeds back into the
/// next step.
pub struct DecMasks {
    between: Vec<Option<NodeId>>,
    att: Option<NodeId>,
}

impl DecMasks {
    pub fn sample<S: Scalar>(
        tape: &mut Tape<S>,
        cfg: &DecoderConfig,
        ratio: f64,
        rng: &mut RngStream,
    ) -> Result<DecMasks> {
        if !(0.0..1.0).contains(&ratio) {
            return Err(Error::Invalid(format!("dropout ratio {} outside [0, 1)", ratio)));
        }
        if ratio == 0.0 {
            return Ok(DecMasks {
                between: vec![None; cfg.lstm_layers],
                att: None,
            });
        }
        let keep = 1.0 - ratio;
        let mut mask = |len: usize| {
            let data: Vec<S> = (0..len)
                .map(|_| {
                    if rng.flip(keep) {
                        S::from_f64(1.0 / keep)
                    } else {
                        S::zero()
                    }
                })
                .collect();
            tape.leaf(Tensor::vector(data))
        };
        let mut between = Vec::with_capacity(cfg.lstm_layers);
        for l in 0..cfg.lstm_layers {
            if l + 1 < cfg.lstm_layers {
                between.push(Some(mask(cfg.lstm_hidden)));
            } else {
                between.push(None);
            }
        }
        let att = Some(mask(cfg.att_dim()));
        Ok(DecMasks { between, att })
    }
}

/// Global attention with the general score: score_s = h_t^T W_a hbar_s over
/// the encoder states (rows of `enc`), softmax to weights, context = weighted
/// sum of encoder states. Returns (context, weights).
pub fn attend<S: Scalar>(
    tape: &mut Tape<S>,
    w_a: NodeId,
    h_t: NodeId,
    enc: NodeId,
) -> Result<(NodeId, NodeId)> {
    let q = tape.matmul(h_t, w_a)?;
    let scores = tape.matmul(enc, q)?;
    let weights = tape.softmax(scores)?;
    let context = tape.matmul(weights, enc)?;
    Ok((context, weights))
}

pub struct DecStepOut {
    pub logits: NodeId,
    pub state: DecState,
    pub weights: NodeId,
}

/// One decoder step: embed the input token, concatenate the previous
/// attentional vector (input feeding), run the LSTM stack, attend over the
/// encoder states, form the attentional vector tanh(W_c [context; h_t]) and
/// project it to vocabulary logits.
pub fn decode_step<S: Scalar>(
    cfg: &DecoderConfig,
    tape: &mut Tape<S>,
    bound: &Bound,
    input_token: u32,
    state: &DecState,
    enc: NodeId,
    masks: Option<&DecMasks>,
) -> Result<DecStepOut> {
    if input_token as usize >= cfg.vocab_size {
        return Err(Error::Invalid(format!(
            "token id {} outside vocabulary of size {}",
            input_token, cfg.vocab_size
        )));
    }
    if state.h.len() != cfg.lstm_layers || state.c.len() != cfg.lstm_layers {
        return Err(Error::Invalid(format!(
            "decoder state has {} layers, config has {}",
            state.h.len(),
            cfg.lstm_layers
        )));
    }
    let table = bound.id("decoder.embedding")?;
    let emb = tape.embed(table, input_token as usize)?;
    let mut x = tape.concat(&[emb, state.att])?;

    let mut new_h = Vec::with_capacity(cfg.lstm_layers);
    let mut new_c = Vec::with_capacity(cfg.lstm_layers);
    for l in 0..cfg.lstm_layers {
        let base = format!("decoder.lstm.{}", l);
        let w_x = bound.id(&format!("{}.w_x", base))?;
        let w_h = bound.id(&format!("{}.w_h", base))?;
        let b = bound.id(&format!("{}.b", base))?;
        let out = tape.lstm_step(x, state.h[l], state.c[l], w_x, w_h, b)?;
        let h = tape.row(out, 0)?;
        let c = tape.row(out, 1)?;
        new_h.push(h);
        new_c.push(c);
        x = h;
        if let Some(m) = masks.and_then(|m| m.between[l]) {
            x = tape.mul(x, m)?;
        }
    }

    let (context, weights) = attend(tape, bound.id("attention.w_a")?, x, enc)?;
    let cat = tape.concat(&[context, x])?;
    let pre = tape.matmul(bound.id("attention.w_c")?, cat)?;
    let att = tape.tanh(pre)?;
    let att_out = match masks.and_then(|m| m.att) {
        Some(m) => tape.mul(att, m)?,
        None => att,
    };
    let proj = tape.matmul(bound.id("output.weight")?, att_out)?;
    let logits = tape.add(proj, bound.id("output.bias")?)?;

    Ok(DecStepOut {
        logits,
        state: DecState {
            h: new_h,
            c: new_c,
            att,
        },
        weights,
    })
}
