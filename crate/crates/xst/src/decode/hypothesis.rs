use crate::{Error, Result};

/// Length-normalization factor lp(len) = ((5 + len)/6)^alpha. A hypothesis's
/// final score is cumulative log-probability divided by this factor, so a
/// positive alpha rewards longer outputs.
pub fn length_penalty(length: usize, alpha: f64) -> Result<f64> {
    if length == 0 {
        return Err(Error::Invalid(
            "length penalty undefined for zero-length hypothesis".to_string(),
        ));
    }
    Ok(((5.0 + length as f64) / 6.0).powf(alpha))
}

#[derive(Debug, Clone)]
pub struct BeamConfig {
    pub beam_size: usize,
    pub length_alpha: f64,
    /// Cap on emitted tokens (EOS included).
    pub max_len: usize,
}

impl BeamConfig {
    /// Paper decoding setup: beam 5, alpha 0.6, output capped relative to the
    /// encoder length.
    pub fn default_for(encoder_len: usize) -> BeamConfig {
        BeamConfig {
            beam_size: 5,
            length_alpha: 0.6,
            max_len: 2 * encoder_len + 10,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.beam_size < 1 {
            return Err(Error::Invalid("beam_size must be >= 1".to_string()));
        }
        if !(0.0..=1.0).contains(&self.length_alpha) {
            return Err(Error::Invalid(format!(
                "length_alpha {} outside [0, 1]",
                self.length_alpha
            )));
        }
        if self.max_len < 1 {
            return Err(Error::Invalid("max_len must be >= 1".to_string()));
        }
        Ok(())
    }
}

/// One decoding hypothesis. `tokens` always starts with BOS; everything after
/// it has been emitted by the decoder, and the length fed to the length
/// penalty counts those emitted tokens, EOS included. The recurrent state
/// travels alongside in the search frontier, not here, so finished
/// hypotheses carry no scorer baggage.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    pub tokens: Vec<u32>,
    /// Cumulative log-probability of the emitted tokens; non-increasing as
    /// tokens append.
    pub log_prob: f64,
    /// True iff the hypothesis ended by emitting EOS (not by hitting the
    /// length cap).
    pub finished: bool,
}

impl Hypothesis {
    pub fn start(bos: u32) -> Hypothesis {
        Hypothesis {
            tokens: vec![bos],
            log_prob: 0.0,
            finished: false,
        }
    }

    /// Number of emitted tokens (excludes the initial BOS).
    pub fn emitted_len(&self) -> usize {
        self.tokens.len().saturating_sub(1)
    }

    pub fn normalized_score(&self, alpha: f64) -> Result<f64> {
        Ok(self.log_prob / length_penalty(self.emitted_len(), alpha)?)
    }
}

/// Ordering used everywhere a winner is picked: higher normalized score
/// first; ties go to the shorter hypothesis, then to lexicographically
/// smaller token ids.
pub fn better(a: &Hypothesis, a_score: f64, b: &Hypothesis, b_score: f64) -> bool {
    if a_score != b_score {
        return a_score > b_score;
    }
    if a.emitted_len() != b.emitted_len() {
        return a.emitted_len() < b.emitted_len();
    }
    a.tokens < b.tokens
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_length_penalty_is_one() {
        for alpha in [0.0, 0.3, 0.6, 1.0] {
            assert!((length_penalty(1, alpha).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_alpha_is_one_for_all_lengths() {
        for len in 1..40 {
            assert!((length_penalty(len, 0.0).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn length_six_alpha_point_six() {
        // ((5 + 6) / 6)^0.6 evaluated directly.
        let want = (11.0f64 / 6.0).powf(0.6);
        assert!((want - 1.4386).abs() < 5e-4);
        assert!((length_penalty(6, 0.6).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn zero_length_rejected() {
        assert!(length_penalty(0, 0.6).is_err());
    }

    #[test]
    fn penalty_grows_with_length() {
        let mut prev = 0.0;
        for len in 1..30 {
            let lp = length_penalty(len, 0.6).unwrap();
            assert!(lp > prev);
            prev = lp;
        }
    }

    #[test]
    fn config_validation() {
        let mut cfg = BeamConfig::default_for(7);
        assert_eq!(cfg.beam_size, 5);
        assert_eq!(cfg.max_len, 24);
        cfg.validate().unwrap();
        cfg.beam_size = 0;
        assert!(cfg.validate().is_err());
        cfg.beam_size = 1;
        cfg.length_alpha = 1.5;
        assert!(cfg.validate().is_err());
        cfg.length_alpha = 0.6;
        cfg.max_len = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn tie_break_prefers_shorter_then_lexicographic() {
        let short = Hypothesis {
            tokens: vec![1, 9, 2],
            log_prob: -1.0,
            finished: true,
        };
        let long = Hypothesis {
            tokens: vec![1, 9, 9, 2],
            log_prob: -1.0,
            finished: true,
        };
        assert!(better(&short, -1.0, &long, -1.0));
        assert!(!better(&long, -1.0, &short, -1.0));

        let lex_small = Hypothesis {
            tokens: vec![1, 3, 2],
            log_prob: -1.0,
            finished: true,
        };
        assert!(better(&lex_small, -1.0, &short, -1.0));
    }
}
