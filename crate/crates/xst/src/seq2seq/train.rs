use crate::numcore::{clip_global_norm, AdamState, Bound, NodeId, RngStream, Scalar, Tape, Tensor};
use crate::textproc::{BOS_ID, EOS_ID, PAD_ID};
use crate::{Error, Result};

use super::config::{ModelConfig, TrainSchedule};
use super::decoder::{decode_step, DecMasks, DecState};
use super::encoder::{encode_batch_train, encode_eval};
use super::model::{BnScratch, Model};

/// Global gradient-norm ceiling applied before every optimizer step.
pub const GRAD_CLIP: f64 = 5.0;

pub(crate) fn argmax_id<S: Scalar>(t: &Tensor<S>) -> u32 {
    let mut best = 0usize;
    for i in 1..t.data.len() {
        if t.data[i] > t.data[best] {
            best = i;
        }
    }
    best as u32
}

/// Effective length of a target sequence: index of its first EOS. Targets
/// must start with BOS, contain an EOS, and carry nothing but PAD after it
/// (batch padding).
fn target_end(ids: &[u32]) -> Result<usize> {
    if ids.first() != Some(&BOS_ID) {
        return Err(Error::Invalid(
            "target sequence must start with BOS".to_string(),
        ));
    }
    let e = ids
        .iter()
        .position(|&t| t == EOS_ID)
        .ok_or_else(|| Error::Invalid("target sequence has no EOS".to_string()))?;
    if ids[e + 1..].iter().any(|&t| t != PAD_ID) {
        return Err(Error::Invalid(
            "target sequence must be BOS tokens EOS [PAD...]".to_string(),
        ));
    }
    Ok(e)
}

/// Record the full training loss graph for one batch: encoder in batch-norm
/// training mode, decoder with scheduled sampling, late-epoch input
/// corruption and variational dropout. Trailing PAD positions carry no loss
/// and are skipped. Returns the mean cross-entropy node and the token count
/// it averages over.
///
/// Per position, the decoder input is the model's own argmax prediction with
/// probability sample_prob, otherwise the teacher token; once the epoch
/// exceeds corrupt_start_epoch, a teacher input is independently replaced by
/// a uniformly random vocabulary token with probability corrupt_prob. Loss
/// targets are never altered: corruption degrades only what the decoder
/// conditions on.
pub fn build_training_loss<S: Scalar>(
    cfg: &ModelConfig,
    tape: &mut Tape<S>,
    bound: &Bound,
    bn: &mut BnScratch<S>,
    batch: &[(&Tensor<S>, &[u32])],
    epoch: usize,
    sched: &TrainSchedule,
    rng: &mut RngStream,
) -> Result<(NodeId, usize)> {
    sched.validate()?;
    if batch.is_empty() {
        return Err(Error::Invalid("training batch is empty".to_string()));
    }
    let mut ends = Vec::with_capacity(batch.len());
    for (_, ids) in batch {
        ends.push(target_end(ids)?);
    }

    let feats: Vec<&Tensor<S>> = batch.iter().map(|(f, _)| *f).collect();
    let encs = encode_batch_train(
        &cfg.encoder,
        tape,
        bound,
        &feats,
        bn,
        sched.dropout,
        rng,
    )?;

    let vocab = cfg.decoder.vocab_size;
    let corrupt_active = epoch > sched.corrupt_start_epoch && sched.corrupt_prob > 0.0;
    let mut losses = Vec::new();
    let mut n_tokens = 0usize;
    for (bi, (_, ids)) in batch.iter().enumerate() {
        let masks = DecMasks::sample(tape, &cfg.decoder, sched.dropout, rng)?;
        let mut state = DecState::initial(tape, &cfg.decoder);
        let mut prev_logits: Option<NodeId> = None;
        for j in 1..=ends[bi] {
            let input: u32 = match prev_logits {
                None => ids[0],
                Some(prev) => {
                    if rng.flip(sched.sample_prob) {
                        argmax_id(tape.value(prev))
                    } else {
                        let teacher = ids[j - 1];
                        if corrupt_active && rng.flip(sched.corrupt_prob) {
                            rng.below(vocab) as u32
                        } else {
                            teacher
                        }
                    }
                }
            };
            let out = decode_step(&cfg.decoder, tape, bound, input, &state, encs[bi], Some(&masks))?;
            let target = ids[j];
            if target != PAD_ID {
                losses.push(tape.cross_entropy(out.logits, target as usize)?);
                n_tokens += 1;
            }
            prev_logits = Some(out.logits);
            state = out.state;
        }
    }
    if n_tokens == 0 {
        return Err(Error::Invalid(
            "batch contains no non-PAD target tokens".to_string(),
        ));
    }
    let total = tape.add_n(&losses)?;
    let mean = tape.scale(total, 1.0 / n_tokens as f64)?;
    Ok((mean, n_tokens))
}

/// One optimization step over a batch: forward, backward, global-norm clip,
/// Adam update, and commit of the batch-norm running statistics. Returns the
/// mean per-token cross-entropy.
pub fn training_step<S: Scalar>(
    model: &mut Model<S>,
    batch: &[(&Tensor<S>, &[u32])],
    epoch: usize,
    sched: &TrainSchedule,
    adam: &mut AdamState<S>,
    rng: &mut RngStream,
) -> Result<f64> {
    let mut tape = Tape::new();
    let bound = model.params.bind(&mut tape);
    let mut bn = BnScratch::load(&model.params, model.cfg.encoder.cnn_filters.len())?;
    let (loss_id, _) = build_training_loss(
        &model.cfg, &mut tape, &bound, &mut bn, batch, epoch, sched, rng,
    )?;
    let loss = tape.value(loss_id).item().to_f64();
    tape.backward(loss_id)?;
    model.params.zero_grads();
    model.params.harvest(&tape, &bound);
    bn.store(&mut model.params)?;
    clip_global_norm(&mut model.params, GRAD_CLIP);
    // The schedule owns the regularization strength; keep the optimizer in
    // sync so a caller cannot silently train with a stale decay.
    adam.cfg.weight_decay = sched.weight_decay;
    adam.step(&mut model.params)?;
    Ok(loss)
}

/// Teacher-forced argmax accuracy over non-PAD target positions, inference
/// mode (running batch-norm statistics, no dropout or sampling).
pub fn token_accuracy<S: Scalar>(model: &Model<S>, data: &[(&Tensor<S>, &[u32])]) -> Result<f64> {
    let (correct, total) = teacher_forced_counts(model, data, |logits, target| {
        (argmax_id(logits) == target) as usize as f64
    })?;
    Ok(correct / total)
}

/// Teacher-forced mean per-token cross-entropy, inference mode.
pub fn teacher_forced_loss<S: Scalar>(
    model: &Model<S>,
    data: &[(&Tensor<S>, &[u32])],
) -> Result<f64> {
    let (sum, total) = teacher_forced_counts(model, data, |logits, target| {
        let m = logits
            .data
            .iter()
            .fold(f64::NEG_INFINITY, |a, &b| a.max(b.to_f64()));
        let lse: f64 = logits.data.iter().map(|&x| (x.to_f64() - m).exp()).sum();
        m + lse.ln() - logits.data[target as usize].to_f64()
    })?;
    Ok(sum / total)
}

fn teacher_forced_counts<S: Scalar, F>(
    model: &Model<S>,
    data: &[(&Tensor<S>, &[u32])],
    mut score: F,
) -> Result<(f64, f64)>
where
    F: FnMut(&Tensor<S>, u32) -> f64,
{
    if data.is_empty() {
        return Err(Error::Invalid("no utterances to evaluate".to_string()));
    }
    let mut acc = 0.0;
    let mut total = 0.0;
    for (feat, ids) in data {
        let end = target_end(ids)?;
        let mut tape = Tape::new();
        let bound = model.params.bind(&mut tape);
        let bn = BnScratch::load(&model.params, model.cfg.encoder.cnn_filters.len())?;
        let enc = encode_eval(&model.cfg.encoder, &mut tape, &bound, feat, &bn)?;
        let mut state = DecState::initial(&mut tape, &model.cfg.decoder);
        for j in 1..=end {
            let out = decode_step(
                &model.cfg.decoder,
                &mut tape,
                &bound,
                ids[j - 1],
                &state,
                enc,
                None,
            )?;
            if ids[j] != PAD_ID {
                acc += score(tape.value(out.logits), ids[j]);
                total += 1.0;
            }
            state = out.state;
        }
    }
    if total == 0.0 {
        return Err(Error::Invalid("no non-PAD target tokens".to_string()));
    }
    Ok((acc, total))
}
