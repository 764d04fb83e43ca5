use crate::numcore::{dropout, Bound, NodeId, RngStream, Scalar, Tape, Tensor};
use crate::{Error, Result};

use super::config::EncoderConfig;
use super::model::BnScratch;

pub const BN_MOMENTUM: f64 = 0.9;
pub const BN_EPS: f64 = 1e-5;

fn check_features<S: Scalar>(cfg: &EncoderConfig, feat: &Tensor<S>) -> Result<()> {
    if feat.rank() != 2 || feat.shape[0] == 0 {
        return Err(Error::shape(
            "encode",
            format!("features must be a non-empty (frames, dim) matrix, got {:?}", feat.shape),
        ));
    }
    if feat.shape[1] != cfg.input_dim {
        return Err(Error::shape(
            "encode",
            format!("frame dim {} != configured input_dim {}", feat.shape[1], cfg.input_dim),
        ));
    }
    Ok(())
}

/// One bidirectional LSTM layer over the rows of x: (T, d) -> (T, 2H), each
/// row the forward and backward hidden states at that time, concatenated.
fn bilstm_layer<S: Scalar>(
    tape: &mut Tape<S>,
    bound: &Bound,
    prefix: &str,
    x: NodeId,
    hidden: usize,
) -> Result<NodeId> {
    let t = tape.value(x).shape[0];
    let mut per_dir: Vec<Vec<NodeId>> = Vec::with_capacity(2);
    for dir in ["fwd", "bwd"] {
        let w_x = bound.id(&format!("{}.{}.w_x", prefix, dir))?;
        let w_h = bound.id(&format!("{}.{}.w_h", prefix, dir))?;
        let b = bound.id(&format!("{}.{}.b", prefix, dir))?;
        let mut h = tape.leaf(Tensor::zeros(&[hidden]));
        let mut c = tape.leaf(Tensor::zeros(&[hidden]));
        let mut hs = vec![NodeId(0); t];
        let steps: Vec<usize> = if dir == "fwd" {
            (0..t).collect()
        } else {
            (0..t).rev().collect()
        };
        for i in steps {
            let xi = tape.row(x, i)?;
            let out = tape.lstm_step(xi, h, c, w_x, w_h, b)?;
            h = tape.row(out, 0)?;
            c = tape.row(out, 1)?;
            hs[i] = h;
        }
        per_dir.push(hs);
    }
    let mut rows = Vec::with_capacity(t);
    for i in 0..t {
        rows.push(tape.concat(&[per_dir[0][i], per_dir[1][i]])?);
    }
    tape.stack_rows(&rows)
}

/// Training-mode encoder over a whole batch. Each convolution layer runs
/// conv -> ReLU per utterance, then batch norm pools its statistics over
/// every utterance's frames at once (batch x time), updating the running
/// stats in `bn`. Variational dropout sits between BiLSTM layers.
///
/// Returns one (T', 2H) encoder-state matrix per utterance, in batch order.
pub fn encode_batch_train<S: Scalar>(
    cfg: &EncoderConfig,
    tape: &mut Tape<S>,
    bound: &Bound,
    feats: &[&Tensor<S>],
    bn: &mut BnScratch<S>,
    dropout_ratio: f64,
    rng: &mut RngStream,
) -> Result<Vec<NodeId>> {
    if feats.is_empty() {
        return Err(Error::Invalid("encoder batch is empty".to_string()));
    }
    for f in feats {
        check_features(cfg, f)?;
    }
    if bn.stats.len() != cfg.cnn_filters.len() {
        return Err(Error::Invalid(format!(
            "batch-norm scratch has {} layers, config has {}",
            bn.stats.len(),
            cfg.cnn_filters.len()
        )));
    }

    let mut xs: Vec<NodeId> = feats.iter().map(|f| tape.leaf((*f).clone())).collect();
    for li in 0..cfg.cnn_filters.len() {
        let base = format!("encoder.cnn.{}", li);
        let w = bound.id(&format!("{}.weight", base))?;
        let b = bound.id(&format!("{}.bias", base))?;
        let gamma = bound.id(&format!("{}.bn.gamma", base))?;
        let beta = bound.id(&format!("{}.bn.beta", base))?;
        let mut convd = Vec::with_capacity(xs.len());
        let mut lens = Vec::with_capacity(xs.len());
        for &x in &xs {
            let y = tape.conv1d(x, w, b, cfg.cnn_stride)?;
            let y = tape.relu(y)?;
            lens.push(tape.value(y).shape[0]);
            convd.push(y);
        }
        let cat = tape.concat_rows(&convd)?;
        let (mean, var) = &mut bn.stats[li];
        let normed = tape.batchnorm_train(cat, gamma, beta, mean, var, BN_MOMENTUM, BN_EPS)?;
        let mut next = Vec::with_capacity(xs.len());
        let mut off = 0;
        for &len in &lens {
            next.push(tape.slice_rows(normed, off, len)?);
            off += len;
        }
        xs = next;
    }

    for l in 0..cfg.lstm_layers {
        let prefix = format!("encoder.lstm.{}", l);
        let mut next = Vec::with_capacity(xs.len());
        for &x in &xs {
            next.push(bilstm_layer(tape, bound, &prefix, x, cfg.lstm_hidden)?);
        }
        if l + 1 < cfg.lstm_layers {
            for x in next.iter_mut() {
                *x = dropout(tape, *x, dropout_ratio, rng, true, true)?;
            }
        }
        xs = next;
    }
    Ok(xs)
}

/// Inference-mode encoder for one utterance: batch norm uses the stored
/// running statistics and nothing is stochastic.
pub fn encode_eval<S: Scalar>(
    cfg: &EncoderConfig,
    tape: &mut Tape<S>,
    bound: &Bound,
    feat: &Tensor<S>,
    bn: &BnScratch<S>,
) -> Result<NodeId> {
    check_features(cfg, feat)?;
    if bn.stats.len() != cfg.cnn_filters.len() {
        return Err(Error::Invalid(format!(
            "batch-norm scratch has {} layers, config has {}",
            bn.stats.len(),
            cfg.cnn_filters.len()
        )));
    }
    let mut x = tape.leaf(feat.clone());
    for li in 0..cfg.cnn_filters.len() {
        let base = format!("encoder.cnn.{}", li);
        let w = bound.id(&format!("{}.weight", base))?;
        let b = bound.id(&format!("{}.bias", base))?;
        let gamma = bound.id(&format!("{}.bn.gamma", base))?;
        let beta = bound.id(&format!("{}.bn.beta", base))?;
        let y = tape.conv1d(x, w, b, cfg.cnn_stride)?;
        let y = tape.relu(y)?;
        let (mean, var) = &bn.stats[li];
        x = tape.batchnorm_eval(y, gamma, beta, mean, var, BN_EPS)?;
    }
    for l in 0..cfg.lstm_layers {
        let prefix = format!("encoder.lstm.{}", l);
        x = bilstm_layer(tape, bound, &prefix, x, cfg.lstm_hidden)?;
    }
    Ok(x)
}
