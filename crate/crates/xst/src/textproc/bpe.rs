use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader, Write};

use sha2::{Digest, Sha256};

use crate::{Error, Result};

/// End-of-word marker appended to each word's final subword when a model is
/// applied, so that decoding can restore word boundaries.
pub const WORD_MARKER: &str = "</w>";

/// Ordered byte-pair-encoding merges learned from a corpus. Merges operate
/// on bare within-word symbol sequences; the word marker is attached after
/// segmentation.
#[derive(Debug, Clone, PartialEq)]
pub struct BpeModel {
    pub merges: Vec<(String, String)>,
    pub marker: String,
    pub corpus_fingerprint: String,
}

fn corpus_fingerprint(lines: &[String]) -> String {
    let mut h = Sha256::new();
    for line in lines {
        h.update(line.as_bytes());
        h.update(b"\n");
    }
    hex(&h.finalize())
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{:02x}", b)).collect()
}

/// Count adjacent symbol pairs across all words, weighted by word frequency.
fn count_pairs(words: &BTreeMap<Vec<String>, u64>) -> BTreeMap<(String, String), u64> {
    let mut counts = BTreeMap::new();
    for (syms, &freq) in words {
        for w in syms.windows(2) {
            *counts
                .entry((w[0].clone(), w[1].clone()))
                .or_insert(0u64) += freq;
        }
    }
    counts
}

/// Merge every adjacent (left, right) occurrence in one leftmost-first pass.
fn merge_symbols(syms: &[String], left: &str, right: &str) -> Vec<String> {
    let mut out = Vec::with_capacity(syms.len());
    let mut i = 0;
    while i < syms.len() {
        if i + 1 < syms.len() && syms[i] == left && syms[i + 1] == right {
            out.push(format!("{}{}", left, right));
            i += 2;
        } else {
            out.push(syms[i].clone());
            i += 1;
        }
    }
    out
}

/// Learn up to `num_merges` merges by repeatedly fusing the most frequent
/// adjacent symbol pair. Ties break lexicographically on (left, right);
/// learning stops early once no pair occurs at least twice.
pub fn learn_bpe(lines: &[String], num_merges: usize) -> Result<BpeModel> {
    let mut words: BTreeMap<Vec<String>, u64> = BTreeMap::new();
    for line in lines {
        for word in line.split_whitespace() {
            let syms: Vec<String> = word.chars().map(|c| c.to_string()).collect();
            *words.entry(syms).or_insert(0) += 1;
        }
    }
    if words.is_empty() {
        return Err(Error::Invalid("empty corpus for BPE learning".to_string()));
    }
    let mut merges = Vec::new();
    let mut seen = BTreeSet::new();
    for _ in 0..num_merges {
        let counts = count_pairs(&words);
        let best = counts
            .iter()
            .max_by(|a, b| a.1.cmp(b.1).then_with(|| b.0.cmp(a.0)))
            .map(|(pair, &c)| (pair.clone(), c));
        let Some((pair, count)) = best else { break };
        if count < 2 {
            break;
        }
        if !seen.insert(pair.clone()) {
            break;
        }
        let mut next: BTreeMap<Vec<String>, u64> = BTreeMap::new();
        for (syms, freq) in &words {
            let merged = merge_symbols(syms, &pair.0, &pair.1);
            *next.entry(merged).or_insert(0) += freq;
        }
        words = next;
        merges.push(pair);
    }
    Ok(BpeModel {
        merges,
        marker: WORD_MARKER.to_string(),
        corpus_fingerprint: corpus_fingerprint(lines),
    })
}

/// Split one word into subwords by applying the model's merges in learned
/// order. No marker is attached here.
pub fn segment_word(model: &BpeModel, word: &str) -> Vec<String> {
    let mut syms: Vec<String> = word.chars().map(|c| c.to_string()).collect();
    for (l, r) in &model.merges {
        if syms.len() < 2 {
            break;
        }
        syms = merge_symbols(&syms, l, r);
    }
    syms
}

/// Segment a whitespace-tokenized line. Each word's final subword carries
/// the end-of-word marker, so concatenation restores the original line.
pub fn apply_bpe(model: &BpeModel, line: &str) -> Vec<String> {
    let mut out = Vec::new();
    for word in line.split_whitespace() {
        let mut syms = segment_word(model, word);
        if let Some(last) = syms.last_mut() {
            last.push_str(&model.marker);
        }
        out.extend(syms);
    }
    out
}

/// Inverse of `apply_bpe`: join subwords, breaking words at the marker.
pub fn decode_subwords(subwords: &[String]) -> String {
    let mut words = Vec::new();
    let mut cur = String::new();
    for sw in subwords {
        if let Some(stem) = sw.strip_suffix(WORD_MARKER) {
            cur.push_str(stem);
            words.push(std::mem::take(&mut cur));
        } else {
            cur.push_str(sw);
        }
    }
    if !cur.is_empty() {
        words.push(cur);
    }
    words.join(" ")
}

impl BpeModel {
    /// Header "xstbpe v1 <num_merges> <fingerprint>", then one merge per
    /// line as "left right".
    pub fn save(&self, path: &str) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(f);
        writeln!(
            w,
            "xstbpe v1 {} {}",
            self.merges.len(),
            self.corpus_fingerprint
        )
        .map_err(|e| Error::io(path, e))?;
        for (l, r) in &self.merges {
            writeln!(w, "{} {}", l, r).map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    }

    pub fn load(path: &str) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = BufReader::new(f).lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::format(path, "empty file"))?
            .map_err(|e| Error::io(path, e))?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 4 || parts[0] != "xstbpe" || parts[1] != "v1" {
            return Err(Error::format(path, format!("bad header '{}'", header)));
        }
        let count: usize = parts[2]
            .parse()
            .map_err(|_| Error::format(path, format!("bad merge count '{}'", parts[2])))?;
        let fingerprint = parts[3].to_string();
        let mut merges = Vec::with_capacity(count);
        for line in lines {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.is_empty() {
                continue;
            }
            let mut it = line.split(' ');
            let (Some(l), Some(r), None) = (it.next(), it.next(), it.next()) else {
                return Err(Error::format(path, format!("bad merge line '{}'", line)));
            };
            merges.push((l.to_string(), r.to_string()));
        }
        if merges.len() != count {
            return Err(Error::format(
                path,
                format!("expected {} merges, found {}", count, merges.len()),
            ));
        }
        Ok(BpeModel {
            merges,
            marker: WORD_MARKER.to_string(),
            corpus_fingerprint: fingerprint,
        })
    }
}
