use serde::{Deserialize, Serialize};

use super::data::load_features_only;
use super::manifest::Manifest;
use crate::decode::{beam_search, BeamConfig, StepScorer};
use crate::evalmetrics::{evaluate_corpus, naive_topk, MatchResource, SynonymTable};
use crate::seq2seq::{InferenceScorer, Model};
use crate::textproc::Vocab;
use crate::transfer::Checkpoint;
use crate::{Error, Result};

/// Rebuilds a runnable model from a checkpoint, insisting that the
/// checkpoint knows which vocabulary its output layer indexes and that it is
/// the one we are decoding with.
fn model_for_decoding(ck: &Checkpoint, vocab: &Vocab) -> Result<Model<f32>> {
    let fp = ck.vocab_fingerprint.as_deref().ok_or_else(|| {
        Error::Invalid(
            "checkpoint carries no vocab fingerprint; it cannot produce text".to_string(),
        )
    })?;
    if fp != vocab.fingerprint {
        return Err(Error::VocabMismatch(format!(
            "checkpoint was trained against vocab {} but decoding uses {}",
            &fp[..fp.len().min(12)],
            &vocab.fingerprint[..vocab.fingerprint.len().min(12)]
        )));
    }
    ck.config.validate()?;
    Ok(Model {
        cfg: ck.config.clone(),
        params: ck.params.clone(),
    })
}

/// Beam-decodes every utterance and writes one hypothesis line per row, in
/// manifest order. An empty manifest produces an empty file.
pub fn translate(
    ck: &Checkpoint,
    manifest: &Manifest,
    vocab: &Vocab,
    beam_size: usize,
    length_alpha: f64,
    out_path: &str,
) -> Result<()> {
    let model = model_for_decoding(ck, vocab)?;
    let feats = load_features_only(manifest)?;
    let mut out = String::new();
    for (_, feat) in &feats {
        let mut scorer = InferenceScorer::new(&model, feat)?;
        let cfg = BeamConfig {
            beam_size,
            length_alpha,
            max_len: BeamConfig::default_for(scorer.encoder_len()).max_len,
        };
        let (best, _) = beam_search(&mut scorer, &cfg)?;
        out.push_str(&vocab.decode(&best.tokens)?);
        out.push('\n');
    }
    std::fs::write(out_path, out).map_err(|e| Error::io(out_path, e))
}

/// Greedy-decodes one utterance and writes its attention weights as a plain
/// CSV matrix: one row per decoded token (the closing EOS step included),
/// one column per encoder position. Every row sums to 1 up to rounding.
pub fn dump_attention(
    ck: &Checkpoint,
    manifest: &Manifest,
    vocab: &Vocab,
    utterance_id: &str,
    out_path: &str,
) -> Result<()> {
    let row = manifest
        .rows
        .iter()
        .position(|r| r.utterance_id == utterance_id)
        .ok_or_else(|| {
            Error::Invalid(format!("utterance '{}' is not in the manifest", utterance_id))
        })?;
    let single = Manifest {
        rows: vec![manifest.rows[row].clone()],
        ..manifest.clone()
    };
    let model = model_for_decoding(ck, vocab)?;
    let (_, feat) = load_features_only(&single)?.remove(0);

    let mut scorer = InferenceScorer::new(&model, &feat)?;
    let max_len = BeamConfig::default_for(scorer.encoder_len()).max_len;
    let mut state = scorer.initial_state()?;
    let mut token = crate::textproc::BOS_ID;
    let mut out = String::new();
    for _ in 0..max_len {
        let (logp, next_state, weights) = scorer.step_detailed(&state, token)?;
        let best = logp
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap().then(b.0.cmp(&a.0)))
            .map(|(i, _)| i as u32)
            .expect("non-empty vocabulary");
        let cells: Vec<String> = weights.iter().map(|w| format!("{}", w)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
        if best == crate::textproc::EOS_ID {
            break;
        }
        state = next_state;
        token = best;
    }
    std::fs::write(out_path, out).map_err(|e| Error::io(out_path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineReport {
    pub k: usize,
    pub precision: f64,
    pub recall: f64,
}

/// What `evaluate` writes: corpus scores plus, when a training text was
/// supplied, the frequent-word baseline it should be compared against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub bleu: f64,
    pub precision: f64,
    pub recall: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wer: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub baseline: Option<BaselineReport>,
}

pub fn read_lines(path: &str) -> Result<Vec<String>> {
    let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(raw.lines().map(str::to_string).collect())
}

/// Scores a hypotheses file against a line-aligned references file.
/// `baseline_train` switches on the naive top-K comparison (K swept over
/// 5..=20 on the supplied training text); `synonyms` relaxes unigram
/// matching with a synonym table.
pub fn evaluate_files(
    hyp_path: &str,
    ref_path: &str,
    baseline_train: Option<&str>,
    synonyms: Option<&str>,
    with_wer: bool,
) -> Result<EvalSummary> {
    let hyps = read_lines(hyp_path)?;
    let refs = read_lines(ref_path)?;
    let mut resource = MatchResource::exact_only();
    if let Some(path) = synonyms {
        resource.synonyms = Some(SynonymTable::load(path)?);
        resource.use_synonyms = true;
    }
    let report = evaluate_corpus(&hyps, &refs, &resource, with_wer)?;
    let baseline = match baseline_train {
        Some(path) => {
            let train_lines = read_lines(path)?;
            let (k, precision, recall) = naive_topk(&train_lines, &refs, 5..=20)?;
            Some(BaselineReport {
                k,
                precision,
                recall,
            })
        }
        None => None,
    };
    Ok(EvalSummary {
        bleu: report.bleu,
        precision: report.precision,
        recall: report.recall,
        wer: report.wer,
        baseline,
    })
}
