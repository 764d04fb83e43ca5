//! Target-text processing: byte pair encoding over within-word character
//! sequences and the vocabulary (with fingerprint) built from a learned
//! model.

pub mod bpe;
pub mod vocab;

pub use bpe::{apply_bpe, decode_subwords, learn_bpe, segment_word, BpeModel, WORD_MARKER};
pub use vocab::{build_vocab, TokenSequence, Vocab, BOS_ID, EOS_ID, PAD_ID};
