use std::collections::{BTreeSet, HashMap};
use std::io::{BufRead, BufReader};

use crate::{Error, Result};

const MIN_STEM_LEN: usize = 3;

/// Deterministic suffix-stripping stemmer. Rules are plain suffixes, tried
/// longest-first; stripping repeats until no rule applies, which makes
/// stemming idempotent by construction. Stems never shrink below three
/// characters.
#[derive(Debug, Clone)]
pub struct Stemmer {
    rules: Vec<String>,
}

impl Stemmer {
    pub fn from_rules(mut rules: Vec<String>) -> Self {
        rules.retain(|r| !r.is_empty());
        rules.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.cmp(b)));
        rules.dedup();
        Stemmer { rules }
    }

    fn from_rule_text(text: &str) -> Self {
        let rules = text
            .lines()
            .map(|l| l.trim())
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|l| l.to_string())
            .collect();
        Self::from_rules(rules)
    }

    /// English rule list shipped with the crate.
    pub fn english() -> Self {
        Self::from_rule_text(include_str!("../../data/stem_en.txt"))
    }

    /// French rule list shipped with the crate.
    pub fn french() -> Self {
        Self::from_rule_text(include_str!("../../data/stem_fr.txt"))
    }

    /// No-op stemmer: stem(w) = w, so the stem tier degenerates to exact.
    pub fn identity() -> Self {
        Stemmer { rules: Vec::new() }
    }

    pub fn stem(&self, word: &str) -> String {
        let mut w = word.to_string();
        loop {
            let mut stripped = false;
            for rule in &self.rules {
                if w.len() >= rule.len() + MIN_STEM_LEN && w.ends_with(rule.as_str()) {
                    w.truncate(w.len() - rule.len());
                    stripped = true;
                    break;
                }
            }
            if !stripped {
                return w;
            }
        }
    }
}

/// Synonym sets loaded from a file of whitespace-separated words, one set
/// per line. Two words match when they share any set.
#[derive(Debug, Clone, Default)]
pub struct SynonymTable {
    membership: HashMap<String, BTreeSet<usize>>,
}

impl SynonymTable {
    pub fn from_sets(sets: &[Vec<String>]) -> Self {
        let mut membership: HashMap<String, BTreeSet<usize>> = HashMap::new();
        for (i, set) in sets.iter().enumerate() {
            for w in set {
                membership.entry(w.clone()).or_default().insert(i);
            }
        }
        SynonymTable { membership }
    }

    pub fn load(path: &str) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut sets = Vec::new();
        for line in BufReader::new(f).lines() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let words: Vec<String> = line.split_whitespace().map(|w| w.to_string()).collect();
            if !words.is_empty() {
                sets.push(words);
            }
        }
        Ok(Self::from_sets(&sets))
    }

    pub fn related(&self, a: &str, b: &str) -> bool {
        match (self.membership.get(a), self.membership.get(b)) {
            (Some(x), Some(y)) => !x.is_disjoint(y),
            _ => false,
        }
    }
}

/// Matching configuration for unigram precision/recall. The exact tier is
/// always on; stem and synonym tiers are opt-in and weigh 0.8.
pub struct MatchResource {
    pub stemmer: Stemmer,
    pub synonyms: Option<SynonymTable>,
    pub use_stem: bool,
    pub use_synonyms: bool,
}

impl MatchResource {
    pub fn exact_only() -> Self {
        MatchResource {
            stemmer: Stemmer::identity(),
            synonyms: None,
            use_stem: false,
            use_synonyms: false,
        }
    }

    pub fn with_stemmer(stemmer: Stemmer) -> Self {
        MatchResource {
            stemmer,
            synonyms: None,
            use_stem: true,
            use_synonyms: false,
        }
    }
}

const NON_EXACT_WEIGHT: f64 = 0.8;

/// Per-utterance match summary used for corpus aggregation and reporting.
#[derive(Debug, Clone)]
pub struct UttMatch {
    pub weight: f64,
    pub hyp_tokens: usize,
    pub ref_tokens: usize,
}

impl UttMatch {
    pub fn precision(&self) -> f64 {
        if self.hyp_tokens == 0 {
            0.0
        } else {
            self.weight / self.hyp_tokens as f64
        }
    }

    pub fn recall(&self) -> f64 {
        if self.ref_tokens == 0 {
            0.0
        } else {
            self.weight / self.ref_tokens as f64
        }
    }
}

/// Maximum bipartite matching (Kuhn's augmenting paths) over the free nodes
/// given a tier predicate. `matched_h`/`matched_r` carry assignments from
/// earlier tiers and are updated in place. Returns the number of new pairs.
fn match_tier<F: Fn(usize, usize) -> bool>(
    hyp_n: usize,
    ref_n: usize,
    matched_h: &mut [bool],
    matched_r: &mut [bool],
    edge: F,
) -> usize {
    let mut pair_r: Vec<Option<usize>> = vec![None; ref_n];
    fn try_augment<F: Fn(usize, usize) -> bool>(
        i: usize,
        ref_n: usize,
        edge: &F,
        matched_r: &[bool],
        visited: &mut [bool],
        pair_r: &mut [Option<usize>],
    ) -> bool {
        for j in 0..ref_n {
            if matched_r[j] || visited[j] || !edge(i, j) {
                continue;
            }
            visited[j] = true;
            let free = match pair_r[j] {
                None => true,
                Some(prev) => try_augment(prev, ref_n, edge, matched_r, visited, pair_r),
            };
            if free {
                pair_r[j] = Some(i);
                return true;
            }
        }
        false
    }
    let mut added = 0;
    for i in 0..hyp_n {
        if matched_h[i] {
            continue;
        }
        let mut visited = vec![false; ref_n];
        if try_augment(i, ref_n, &edge, matched_r, &mut visited, &mut pair_r) {
            added += 1;
        }
    }
    for (j, p) in pair_r.iter().enumerate() {
        if let Some(i) = *p {
            matched_h[i] = true;
            matched_r[j] = true;
        }
    }
    added
}

/// Match one utterance's tokens tier by tier: exact pairs first (weight 1.0),
/// then stem pairs, then synonym pairs (weight 0.8 each) over whatever is
/// still unmatched.
pub fn match_utterance(hyp: &[&str], rf: &[&str], resource: &MatchResource) -> Result<UttMatch> {
    if resource.use_synonyms && resource.synonyms.is_none() {
        return Err(Error::Invalid(
            "synonym tier requested but no synonym table loaded".to_string(),
        ));
    }
    let mut matched_h = vec![false; hyp.len()];
    let mut matched_r = vec![false; rf.len()];
    let exact = match_tier(hyp.len(), rf.len(), &mut matched_h, &mut matched_r, |i, j| {
        hyp[i] == rf[j]
    });
    let mut weight = exact as f64;
    if resource.use_stem {
        let hs: Vec<String> = hyp.iter().map(|w| resource.stemmer.stem(w)).collect();
        let rs: Vec<String> = rf.iter().map(|w| resource.stemmer.stem(w)).collect();
        let stem = match_tier(hyp.len(), rf.len(), &mut matched_h, &mut matched_r, |i, j| {
            hs[i] == rs[j]
        });
        weight += NON_EXACT_WEIGHT * stem as f64;
    }
    if resource.use_synonyms {
        let table = resource.synonyms.as_ref().unwrap();
        let syn = match_tier(hyp.len(), rf.len(), &mut matched_h, &mut matched_r, |i, j| {
            table.related(hyp[i], rf[j])
        });
        weight += NON_EXACT_WEIGHT * syn as f64;
    }
    Ok(UttMatch {
        weight,
        hyp_tokens: hyp.len(),
        ref_tokens: rf.len(),
    })
}

/// Corpus unigram precision and recall: token-weighted aggregates of the
/// per-utterance tiered matchings.
pub fn unigram_pr(
    hypotheses: &[String],
    references: &[String],
    resource: &MatchResource,
) -> Result<(f64, f64)> {
    let details = unigram_pr_detailed(hypotheses, references, resource)?;
    let weight: f64 = details.iter().map(|d| d.weight).sum();
    let hyp_total: usize = details.iter().map(|d| d.hyp_tokens).sum();
    let ref_total: usize = details.iter().map(|d| d.ref_tokens).sum();
    let p = if hyp_total == 0 { 0.0 } else { weight / hyp_total as f64 };
    let r = if ref_total == 0 { 0.0 } else { weight / ref_total as f64 };
    Ok((p, r))
}

pub fn unigram_pr_detailed(
    hypotheses: &[String],
    references: &[String],
    resource: &MatchResource,
) -> Result<Vec<UttMatch>> {
    if hypotheses.len() != references.len() {
        return Err(Error::Invalid(format!(
            "unigram_pr: {} hypotheses vs {} references",
            hypotheses.len(),
            references.len()
        )));
    }
    hypotheses
        .iter()
        .zip(references.iter())
        .map(|(h, r)| {
            let ht: Vec<&str> = h.split_whitespace().collect();
            let rt: Vec<&str> = r.split_whitespace().collect();
            match_utterance(&ht, &rt, resource)
        })
        .collect()
}
