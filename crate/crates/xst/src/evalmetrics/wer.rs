use crate::{Error, Result};

/// Levenshtein distance with unit costs over token slices.
pub fn edit_distance(a: &[&str], b: &[&str]) -> usize {
    let (m, n) = (a.len(), b.len());
    let mut prev: Vec<usize> = (0..=n).collect();
    let mut cur = vec![0usize; n + 1];
    for i in 1..=m {
        cur[0] = i;
        for j in 1..=n {
            let sub = prev[j - 1] + usize::from(a[i - 1] != b[j - 1]);
            cur[j] = sub.min(prev[j] + 1).min(cur[j - 1] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[n]
}

/// Word error rate: (substitutions + deletions + insertions) / |reference|.
pub fn wer(hypothesis: &[&str], reference: &[&str]) -> Result<f64> {
    if reference.is_empty() {
        return Err(Error::Invalid("wer: empty reference".to_string()));
    }
    Ok(edit_distance(hypothesis, reference) as f64 / reference.len() as f64)
}

/// Corpus WER: pooled edit operations over pooled reference length.
pub fn corpus_wer(hypotheses: &[String], references: &[String]) -> Result<f64> {
    if hypotheses.len() != references.len() {
        return Err(Error::Invalid(format!(
            "wer: {} hypotheses vs {} references",
            hypotheses.len(),
            references.len()
        )));
    }
    let mut edits = 0usize;
    let mut ref_len = 0usize;
    for (h, r) in hypotheses.iter().zip(references.iter()) {
        let ht: Vec<&str> = h.split_whitespace().collect();
        let rt: Vec<&str> = r.split_whitespace().collect();
        edits += edit_distance(&ht, &rt);
        ref_len += rt.len();
    }
    if ref_len == 0 {
        return Err(Error::Invalid("wer: empty reference corpus".to_string()));
    }
    Ok(edits as f64 / ref_len as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_sequences_score_zero() {
        let toks = ["a", "b", "c"];
        assert_eq!(wer(&toks, &toks).unwrap(), 0.0);
    }

    #[test]
    fn empty_hypothesis_is_all_deletions() {
        let r = ["w", "x", "y", "z"];
        assert_eq!(wer(&[], &r).unwrap(), 1.0);
    }

    #[test]
    fn single_substitution_over_three() {
        let h = ["a", "b", "c"];
        let r = ["a", "x", "c"];
        assert!((wer(&h, &r).unwrap() - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn empty_reference_rejected() {
        assert!(wer(&["a"], &[]).is_err());
    }

    #[test]
    fn rate_can_exceed_one_with_insertions() {
        let h = ["a", "b", "c", "d", "e"];
        let r = ["x"];
        assert!(wer(&h, &r).unwrap() > 1.0);
    }

    #[test]
    fn distance_satisfies_triangle_inequality() {
        let seqs: Vec<Vec<&str>> = vec![
            vec!["a", "b", "c"],
            vec!["a", "c"],
            vec!["b", "b", "c", "d"],
            vec![],
            vec!["d", "a", "b", "c"],
        ];
        for x in &seqs {
            for y in &seqs {
                for z in &seqs {
                    let xy = edit_distance(x, y);
                    let xz = edit_distance(x, z);
                    let zy = edit_distance(z, y);
                    assert!(xy <= xz + zy);
                }
            }
        }
    }
}
