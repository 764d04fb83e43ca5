use std::collections::BTreeSet;

use crate::{Error, Result};

/// Flag an utterance pair as code-switched when the source transcript and
/// target translation share more than half of their tokens. The overlap is
/// measured on token types against the smaller type set.
pub fn code_switch_flag(source: &[&str], target: &[&str]) -> Result<bool> {
    if source.is_empty() || target.is_empty() {
        return Err(Error::Invalid("code_switch_flag: empty input".to_string()));
    }
    let s: BTreeSet<&str> = source.iter().copied().collect();
    let t: BTreeSet<&str> = target.iter().copied().collect();
    let inter = s.intersection(&t).count();
    let denom = s.len().min(t.len());
    Ok(inter as f64 > 0.5 * denom as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_utterances_flagged() {
        let toks = ["ngai", "lendi", "oyoa"];
        assert!(code_switch_flag(&toks, &toks).unwrap());
    }

    #[test]
    fn disjoint_vocabularies_not_flagged() {
        assert!(!code_switch_flag(&["aa", "bb"], &["cc", "dd"]).unwrap());
    }

    #[test]
    fn exactly_half_is_not_flagged() {
        // Smaller set has 4 types, overlap exactly 2.
        let src = ["a", "b", "c", "d"];
        let tgt = ["a", "b", "x", "y", "z", "w"];
        assert!(!code_switch_flag(&src, &tgt).unwrap());
    }

    #[test]
    fn just_over_half_is_flagged() {
        let src = ["a", "b", "c", "d"];
        let tgt = ["a", "b", "c", "y", "z"];
        assert!(code_switch_flag(&src, &tgt).unwrap());
    }

    #[test]
    fn empty_inputs_rejected() {
        assert!(code_switch_flag(&[], &["a"]).is_err());
        assert!(code_switch_flag(&["a"], &[]).is_err());
    }
}
