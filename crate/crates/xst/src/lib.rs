//! Desk-scale speech-to-text translation toolkit.
//!
//! The pipeline: raw PCM audio -> MFCC features ([`audiofeat`]) -> subword
//! targets ([`textproc`]) -> attentional encoder-decoder ([`seq2seq`]) trained
//! on a reverse-mode tape ([`numcore`]), with selective reuse of pretrained
//! weights ([`transfer`]), beam search decoding ([`decode`]) and translation
//! quality scoring ([`evalmetrics`]). [`harness`] ties the stages together
//! behind file-level entry points used by the CLI.

pub mod audiofeat;
pub mod decode;
pub mod error;
pub mod evalmetrics;
pub mod harness;
pub mod numcore;
pub mod seq2seq;
pub mod textproc;
pub mod transfer;

pub use error::{Error, Result};
