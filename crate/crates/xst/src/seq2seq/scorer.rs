use crate::decode::StepScorer;
use crate::numcore::{Bound, NodeId, Scalar, Tape, Tensor};
use crate::{Error, Result};

use super::decoder::{decode_step, DecState};
use super::encoder::encode_eval;
use super::model::{BnScratch, Model};

/// Frozen-parameter autoregressive scorer over one utterance. The encoder
/// runs once at construction; every decoder step appends to the internal
/// tape, whose values back the states handed to the search. States are only
/// meaningful with the scorer that created them.
pub struct InferenceScorer<'m, S: Scalar> {
    model: &'m Model<S>,
    tape: Tape<S>,
    bound: Bound,
    enc: NodeId,
    enc_len: usize,
}

#[derive(Clone)]
pub struct ScorerState(DecState);

impl<'m, S: Scalar> InferenceScorer<'m, S> {
    pub fn new(model: &'m Model<S>, feat: &Tensor<S>) -> Result<InferenceScorer<'m, S>> {
        let mut tape = Tape::new();
        let bound = model.params.bind(&mut tape);
        let bn = BnScratch::load(&model.params, model.cfg.encoder.cnn_filters.len())?;
        let enc = encode_eval(&model.cfg.encoder, &mut tape, &bound, feat, &bn)?;
        let enc_len = tape.value(enc).shape[0];
        if enc_len == 0 {
            return Err(Error::Invalid("empty encoder output".to_string()));
        }
        Ok(InferenceScorer {
            model,
            tape,
            bound,
            enc,
            enc_len,
        })
    }

    /// Number of encoder states (T'), for sizing max_len and attention dumps.
    pub fn encoder_len(&self) -> usize {
        self.enc_len
    }

    /// One step, also exposing the attention weights that produced it.
    pub fn step_detailed(
        &mut self,
        state: &ScorerState,
        input_token: u32,
    ) -> Result<(Vec<f64>, ScorerState, Vec<f64>)> {
        let out = decode_step(
            &self.model.cfg.decoder,
            &mut self.tape,
            &self.bound,
            input_token,
            &state.0,
            self.enc,
            None,
        )?;
        let logits = self.tape.value(out.logits);
        let m = logits
            .data
            .iter()
            .fold(f64::NEG_INFINITY, |a, &b| a.max(b.to_f64()));
        let lse = m
            + logits
                .data
                .iter()
                .map(|&x| (x.to_f64() - m).exp())
                .sum::<f64>()
                .ln();
        let logp = logits.data.iter().map(|&x| x.to_f64() - lse).collect();
        let weights = self
            .tape
            .value(out.weights)
            .data
            .iter()
            .map(|&w| w.to_f64())
            .collect();
        Ok((logp, ScorerState(out.state), weights))
    }
}

impl<'m, S: Scalar> StepScorer for InferenceScorer<'m, S> {
    type State = ScorerState;

    fn vocab_size(&self) -> usize {
        self.model.cfg.decoder.vocab_size
    }

    fn initial_state(&mut self) -> Result<ScorerState> {
        Ok(ScorerState(DecState::initial(
            &mut self.tape,
            &self.model.cfg.decoder,
        )))
    }

    fn step(&mut self, state: &ScorerState, input_token: u32) -> Result<(Vec<f64>, ScorerState)> {
        let (logp, next, _) = self.step_detailed(state, input_token)?;
        Ok((logp, next))
    }
}
