use std::io::Write;

use serde::{Deserialize, Serialize};

use super::bleu::bleu;
use super::unigram::{unigram_pr_detailed, MatchResource, UttMatch};
use super::wer::{corpus_wer, edit_distance};
use crate::{Error, Result};

/// Corpus-level evaluation summary. BLEU comes from pooled n-gram counts;
/// precision/recall are token-weighted aggregates; WER is included when the
/// task is transcription-like; k is set for naive baseline reports.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub bleu: f64,
    pub precision: f64,
    pub recall: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wer: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(skip)]
    pub per_utterance: Vec<UttBreakdown>,
}

#[derive(Debug, Clone)]
pub struct UttBreakdown {
    pub index: usize,
    pub hyp_tokens: usize,
    pub ref_tokens: usize,
    pub matched_weight: f64,
    pub precision: f64,
    pub recall: f64,
    pub wer: f64,
}

impl EvalReport {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=100.0).contains(&self.bleu) {
            return Err(Error::Invalid(format!("bleu {} outside [0, 100]", self.bleu)));
        }
        for (name, v) in [("precision", self.precision), ("recall", self.recall)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Invalid(format!("{} {} outside [0, 1]", name, v)));
            }
        }
        if let Some(w) = self.wer {
            if w < 0.0 {
                return Err(Error::Invalid(format!("wer {} negative", w)));
            }
        }
        Ok(())
    }

    pub fn save_json(&self, path: &str) -> Result<()> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::format(path, format!("serialize: {}", e)))?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    /// Per-utterance CSV: one row per pair, fixed column order.
    pub fn save_breakdown_csv(&self, path: &str) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(f);
        writeln!(w, "utterance,hyp_tokens,ref_tokens,matched_weight,precision,recall,wer")
            .map_err(|e| Error::io(path, e))?;
        for u in &self.per_utterance {
            writeln!(
                w,
                "{},{},{},{:.6},{:.6},{:.6},{:.6}",
                u.index, u.hyp_tokens, u.ref_tokens, u.matched_weight, u.precision, u.recall, u.wer
            )
            .map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    }
}

/// Score a hypothesis corpus against references: BLEU, tiered unigram
/// precision/recall, and (optionally) WER.
pub fn evaluate_corpus(
    hypotheses: &[String],
    references: &[String],
    resource: &MatchResource,
    with_wer: bool,
) -> Result<EvalReport> {
    let b = bleu(hypotheses, references)?;
    let details: Vec<UttMatch> = unigram_pr_detailed(hypotheses, references, resource)?;
    let weight: f64 = details.iter().map(|d| d.weight).sum();
    let hyp_total: usize = details.iter().map(|d| d.hyp_tokens).sum();
    let ref_total: usize = details.iter().map(|d| d.ref_tokens).sum();
    let precision = if hyp_total == 0 { 0.0 } else { weight / hyp_total as f64 };
    let recall = if ref_total == 0 { 0.0 } else { weight / ref_total as f64 };
    let wer = if with_wer {
        Some(corpus_wer(hypotheses, references)?)
    } else {
        None
    };
    let per_utterance = hypotheses
        .iter()
        .zip(references.iter())
        .zip(details.iter())
        .enumerate()
        .map(|(i, ((h, r), d))| {
            let ht: Vec<&str> = h.split_whitespace().collect();
            let rt: Vec<&str> = r.split_whitespace().collect();
            let utt_wer = if rt.is_empty() {
                0.0
            } else {
                edit_distance(&ht, &rt) as f64 / rt.len() as f64
            };
            UttBreakdown {
                index: i,
                hyp_tokens: d.hyp_tokens,
                ref_tokens: d.ref_tokens,
                matched_weight: d.weight,
                precision: d.precision(),
                recall: d.recall(),
                wer: utt_wer,
            }
        })
        .collect();
    let report = EvalReport {
        bleu: b,
        precision,
        recall,
        wer,
        k: None,
        per_utterance,
    };
    report.validate()?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lines(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn perfect_corpus_report() {
        let c = lines(&["a b c d", "e f g h"]);
        let rep = evaluate_corpus(&c, &c, &MatchResource::exact_only(), true).unwrap();
        assert!((rep.bleu - 100.0).abs() < 1e-9);
        assert_eq!(rep.precision, 1.0);
        assert_eq!(rep.recall, 1.0);
        assert_eq!(rep.wer, Some(0.0));
        assert_eq!(rep.per_utterance.len(), 2);
    }

    #[test]
    fn json_has_exactly_the_contract_fields() {
        let c = lines(&["a b c d"]);
        let mut rep = evaluate_corpus(&c, &c, &MatchResource::exact_only(), false).unwrap();
        let json = serde_json::to_value(&rep).unwrap();
        let obj = json.as_object().unwrap();
        let mut keys: Vec<&String> = obj.keys().collect();
        keys.sort();
        assert_eq!(keys, vec!["bleu", "precision", "recall"]);
        rep.wer = Some(0.25);
        rep.k = Some(8);
        let json = serde_json::to_value(&rep).unwrap();
        let obj = json.as_object().unwrap();
        let mut keys: Vec<&String> = obj.keys().collect();
        keys.sort();
        assert_eq!(keys, vec!["bleu", "k", "precision", "recall", "wer"]);
    }

    #[test]
    fn files_written_and_parse_back() {
        let dir = tempfile::tempdir().unwrap();
        let c = lines(&["a b", "c d"]);
        let rep = evaluate_corpus(&c, &c, &MatchResource::exact_only(), true).unwrap();
        let jp = dir.path().join("report.json");
        let cp = dir.path().join("breakdown.csv");
        rep.save_json(jp.to_str().unwrap()).unwrap();
        rep.save_breakdown_csv(cp.to_str().unwrap()).unwrap();
        let back: EvalReport =
            serde_json::from_str(&std::fs::read_to_string(&jp).unwrap()).unwrap();
        assert_eq!(back.bleu, rep.bleu);
        let csv = std::fs::read_to_string(&cp).unwrap();
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.starts_with("utterance,hyp_tokens,ref_tokens"));
    }
}
