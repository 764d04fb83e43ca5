use std::collections::{BTreeSet, HashMap};
use std::io::{BufRead, BufReader, Write};

use sha2::{Digest, Sha256};

use super::bpe::{apply_bpe, hex, BpeModel};
use crate::{Error, Result};

pub const PAD_ID: u32 = 0;
pub const BOS_ID: u32 = 1;
pub const EOS_ID: u32 = 2;

pub const PAD_TOKEN: &str = "<pad>";
pub const BOS_TOKEN: &str = "<bos>";
pub const EOS_TOKEN: &str = "<eos>";

/// Token/id bijection with fixed special ids and a fingerprint hashed over
/// the sorted token list. Decoder and output parameters are only
/// transferable between models whose vocab fingerprints match.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
    pub fingerprint: String,
}

/// Encoded target line: BOS, subword ids, EOS.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenSequence {
    pub utterance_id: String,
    pub ids: Vec<u32>,
}

impl Vocab {
    fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < 3
            || tokens[0] != PAD_TOKEN
            || tokens[1] != BOS_TOKEN
            || tokens[2] != EOS_TOKEN
        {
            return Err(Error::Invalid(
                "vocab must start with <pad>, <bos>, <eos>".to_string(),
            ));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i as u32).is_some() {
                return Err(Error::Invalid(format!("duplicate vocab token '{}'", t)));
            }
        }
        let mut sorted: Vec<&String> = tokens.iter().collect();
        sorted.sort();
        let mut h = Sha256::new();
        for t in sorted {
            h.update(t.as_bytes());
            h.update(b"\n");
        }
        let fingerprint = hex(&h.finalize());
        Ok(Vocab {
            tokens,
            index,
            fingerprint,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(|s| s.as_str())
    }

    /// Encode a line: segment with the model, map to ids, wrap in BOS/EOS.
    /// A produced subword missing from the vocab signals a model/vocab
    /// mismatch and is an error.
    pub fn encode(&self, model: &BpeModel, utterance_id: &str, line: &str) -> Result<TokenSequence> {
        let mut ids = vec![BOS_ID];
        for sw in apply_bpe(model, line) {
            match self.id(&sw) {
                Some(id) => ids.push(id),
                None => {
                    return Err(Error::VocabMismatch(format!(
                        "subword '{}' produced for utterance {} is not in the vocabulary",
                        sw, utterance_id
                    )))
                }
            }
        }
        ids.push(EOS_ID);
        Ok(TokenSequence {
            utterance_id: utterance_id.to_string(),
            ids,
        })
    }

    /// Map ids back to text, skipping specials and joining at word markers.
    pub fn decode(&self, ids: &[u32]) -> Result<String> {
        let mut subwords = Vec::new();
        for &id in ids {
            if id == PAD_ID || id == BOS_ID || id == EOS_ID {
                continue;
            }
            let tok = self
                .token(id)
                .ok_or_else(|| Error::VocabMismatch(format!("id {} out of range", id)))?;
            subwords.push(tok.to_string());
        }
        Ok(super::bpe::decode_subwords(&subwords))
    }

    /// One token per line, line number = id.
    pub fn save(&self, path: &str) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(f);
        for t in &self.tokens {
            writeln!(w, "{}", t).map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    }

    pub fn load(path: &str) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut tokens = Vec::new();
        for line in BufReader::new(f).lines() {
            tokens.push(line.map_err(|e| Error::io(path, e))?);
        }
        Self::from_tokens(tokens).map_err(|e| match e {
            Error::Invalid(d) => Error::format(path, d),
            other => other,
        })
    }
}

/// Build the vocabulary a model can ever produce: the specials, then every
/// producible subword type (corpus characters plus each merge's product) in
/// both bare and end-of-word-marked form, sorted for determinism. Covering
/// the full producible set keeps the vocabulary open: any string over the
/// training charset encodes without error.
pub fn build_vocab(model: &BpeModel, corpus: &[String]) -> Result<Vocab> {
    let mut types: BTreeSet<String> = BTreeSet::new();
    for line in corpus {
        for word in line.split_whitespace() {
            for c in word.chars() {
                types.insert(c.to_string());
            }
        }
    }
    if types.is_empty() {
        return Err(Error::Invalid("empty corpus for vocabulary".to_string()));
    }
    for (l, r) in &model.merges {
        types.insert(format!("{}{}", l, r));
    }
    let mut tokens = vec![
        PAD_TOKEN.to_string(),
        BOS_TOKEN.to_string(),
        EOS_TOKEN.to_string(),
    ];
    for t in &types {
        tokens.push(t.clone());
        tokens.push(format!("{}{}", t, model.marker));
    }
    Vocab::from_tokens(tokens)
}
