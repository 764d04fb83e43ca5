use std::collections::HashMap;

use crate::{Error, Result};

fn ngram_counts(tokens: &[&str], n: usize) -> HashMap<Vec<String>, u64> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            let key: Vec<String> = w.iter().map(|s| s.to_string()).collect();
            *counts.entry(key).or_insert(0) += 1;
        }
    }
    counts
}

/// Corpus BLEU with multi-bleu semantics: modified n-gram precisions for
/// n = 1..4 pooled over the whole corpus (clipped counts), geometric mean,
/// brevity penalty exp(1 - ref_len/hyp_len) when the hypothesis corpus is
/// shorter, no smoothing. Any zero n-gram precision zeroes the score.
/// Returns a value in [0, 100].
pub fn bleu(hypotheses: &[String], references: &[String]) -> Result<f64> {
    if hypotheses.len() != references.len() {
        return Err(Error::Invalid(format!(
            "bleu: {} hypotheses vs {} references",
            hypotheses.len(),
            references.len()
        )));
    }
    if hypotheses.is_empty() {
        return Err(Error::Invalid("bleu: empty corpus".to_string()));
    }
    let mut matched = [0u64; 4];
    let mut total = [0u64; 4];
    let mut hyp_len = 0u64;
    let mut ref_len = 0u64;
    for (h, r) in hypotheses.iter().zip(references.iter()) {
        let ht: Vec<&str> = h.split_whitespace().collect();
        let rt: Vec<&str> = r.split_whitespace().collect();
        hyp_len += ht.len() as u64;
        ref_len += rt.len() as u64;
        for n in 1..=4 {
            let hc = ngram_counts(&ht, n);
            let rc = ngram_counts(&rt, n);
            for (gram, &c) in &hc {
                total[n - 1] += c;
                if let Some(&rcount) = rc.get(gram) {
                    matched[n - 1] += c.min(rcount);
                }
            }
        }
    }
    if hyp_len == 0 {
        return Ok(0.0);
    }
    let mut log_sum = 0.0;
    for n in 0..4 {
        if matched[n] == 0 || total[n] == 0 {
            return Ok(0.0);
        }
        log_sum += (matched[n] as f64 / total[n] as f64).ln();
    }
    let bp = if hyp_len < ref_len {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    } else {
        1.0
    };
    Ok(100.0 * bp * (log_sum / 4.0).exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lines(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn identical_corpus_scores_100() {
        let c = lines(&["the quick brown fox jumps", "over the lazy dog today"]);
        let s = bleu(&c, &c).unwrap();
        assert!((s - 100.0).abs() < 1e-9, "{}", s);
    }

    #[test]
    fn no_shared_fourgram_scores_zero() {
        let h = lines(&["a b c d e"]);
        let r = lines(&["a b c x e"]);
        assert_eq!(bleu(&h, &r).unwrap(), 0.0);
    }

    #[test]
    fn cat_sat_example_is_zero_for_missing_fourgram() {
        // p1 = 5/6, p2 = 3/5, p3 = 1/4, p4 = 0/3, so the unsmoothed score
        // collapses to zero.
        let h = lines(&["the cat sat on the mat"]);
        let r = lines(&["the cat is on the mat"]);
        assert_eq!(bleu(&h, &r).unwrap(), 0.0);
    }

    #[test]
    fn clipping_limits_repeated_words() {
        // "the the the the the" vs "the cat": unigram matches clip at 1.
        let h = lines(&["the the the the the"]);
        let r = lines(&["the cat sat down now"]);
        assert_eq!(bleu(&h, &r).unwrap(), 0.0);
    }

    #[test]
    fn brevity_penalty_kicks_in_for_short_hypotheses() {
        let h = lines(&["a b c d"]);
        let r = lines(&["a b c d e f g h"]);
        let s = bleu(&h, &r).unwrap();
        // p_n = 1 for all n, BP = exp(1 - 8/4).
        let want = 100.0 * (1.0f64 - 2.0).exp();
        assert!((s - want).abs() < 1e-9, "{} vs {}", s, want);
    }

    #[test]
    fn pair_order_is_irrelevant() {
        let h = lines(&["a b c d e", "f g h i j"]);
        let r = lines(&["a b c d x", "f g h i j"]);
        let h2 = lines(&["f g h i j", "a b c d e"]);
        let r2 = lines(&["f g h i j", "a b c d x"]);
        assert_eq!(bleu(&h, &r).unwrap(), bleu(&h2, &r2).unwrap());
    }

    #[test]
    fn mismatched_counts_rejected() {
        assert!(bleu(&lines(&["a"]), &lines(&["a", "b"])).is_err());
        assert!(bleu(&[], &[]).is_err());
    }
}
