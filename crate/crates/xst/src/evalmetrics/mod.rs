//! Translation and transcription quality metrics: corpus BLEU, tiered
//! unigram precision/recall, WER, a frequent-word baseline, and the
//! code-switch overlap flag.

pub mod baseline;
pub mod bleu;
pub mod codeswitch;
pub mod report;
pub mod unigram;
pub mod wer;

pub use baseline::naive_topk;
pub use bleu::bleu;
pub use codeswitch::code_switch_flag;
pub use report::{evaluate_corpus, EvalReport, UttBreakdown};
pub use unigram::{
    match_utterance, unigram_pr, unigram_pr_detailed, MatchResource, Stemmer, SynonymTable,
    UttMatch,
};
pub use wer::{corpus_wer, edit_distance, wer};
