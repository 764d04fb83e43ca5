use crate::textproc::{BOS_ID, EOS_ID};
use crate::{Error, Result};

use super::hypothesis::{better, length_penalty, BeamConfig, Hypothesis};

/// One autoregressive scoring step. Implementations hold frozen model
/// parameters plus the encoded utterance; `step` consumes the previous token
/// and returns log-probabilities over the whole vocabulary for the next one.
/// States are cheap handles (the search clones them freely).
pub trait StepScorer {
    type State: Clone;

    fn vocab_size(&self) -> usize;

    /// State before any token has been consumed. The first `step` call feeds
    /// BOS against this state.
    fn initial_state(&mut self) -> Result<Self::State>;

    /// Log-probabilities (length == vocab_size, all finite and <= 0 up to
    /// rounding) for the token following `input_token`, plus the advanced
    /// state.
    fn step(&mut self, state: &Self::State, input_token: u32)
        -> Result<(Vec<f64>, Self::State)>;
}

fn checked_step<Sc: StepScorer>(
    scorer: &mut Sc,
    state: &Sc::State,
    token: u32,
) -> Result<(Vec<f64>, Sc::State)> {
    let vocab = scorer.vocab_size();
    let (logp, next) = scorer.step(state, token)?;
    if logp.len() != vocab {
        return Err(Error::Invalid(format!(
            "scorer returned {} log-probs for vocab of {}",
            logp.len(),
            vocab
        )));
    }
    if let Some(bad) = logp.iter().find(|v| !v.is_finite()) {
        return Err(Error::Invalid(format!(
            "scorer produced non-finite log-prob {}",
            bad
        )));
    }
    Ok((logp, next))
}

/// Pick the most probable token at every step until EOS or the length cap.
/// Ties in the argmax go to the smaller token id, matching beam search's
/// lexicographic preference.
pub fn greedy_decode<Sc: StepScorer>(scorer: &mut Sc, max_len: usize) -> Result<Hypothesis> {
    if max_len < 1 {
        return Err(Error::Invalid("max_len must be >= 1".to_string()));
    }
    if scorer.vocab_size() == 0 {
        return Err(Error::Invalid("scorer reports an empty vocabulary".to_string()));
    }
    let mut state = scorer.initial_state()?;
    let mut hyp = Hypothesis::start(BOS_ID);
    for _ in 0..max_len {
        let last = *hyp.tokens.last().expect("hypothesis starts non-empty");
        let (logp, next) = checked_step(scorer, &state, last)?;
        let mut best = 0usize;
        for (t, &lp) in logp.iter().enumerate().skip(1) {
            if lp > logp[best] {
                best = t;
            }
        }
        hyp.tokens.push(best as u32);
        hyp.log_prob += logp[best];
        state = next;
        if best as u32 == EOS_ID {
            hyp.finished = true;
            break;
        }
    }
    Ok(hyp)
}

struct Frontier<St> {
    hyp: Hypothesis,
    state: St,
}

/// Standard beam search with length normalization. Every live hypothesis is
/// expanded by every token; the top `beam_size` by cumulative log-probability
/// survive. Hypotheses emitting EOS move to a finished pool and are never
/// extended. The search stops once no live hypothesis can still beat the
/// pool: since log-probabilities only accumulate downward and the penalty
/// grows with length, a live score `c <= 0` can never normalize above
/// `c / lp(max_len)`. Stopping on a strict comparison keeps exact ties alive
/// so tie-breaking matches exhaustive enumeration.
///
/// Returns the winner plus the pool ranked by normalized score (ties: shorter
/// first, then lexicographic token ids), truncated to beam_size entries.
pub fn beam_search<Sc: StepScorer>(
    scorer: &mut Sc,
    cfg: &BeamConfig,
) -> Result<(Hypothesis, Vec<Hypothesis>)> {
    cfg.validate()?;
    if scorer.vocab_size() == 0 {
        return Err(Error::Invalid("scorer reports an empty vocabulary".to_string()));
    }
    let lp_cap = length_penalty(cfg.max_len, cfg.length_alpha)?;

    let mut live = vec![Frontier {
        hyp: Hypothesis::start(BOS_ID),
        state: scorer.initial_state()?,
    }];
    let mut pool: Vec<Hypothesis> = Vec::new();

    for _ in 0..cfg.max_len {
        if live.is_empty() {
            break;
        }
        let mut next_states = Vec::with_capacity(live.len());
        // (cumulative log-prob, extended tokens, parent index, token)
        let mut cands: Vec<(f64, Vec<u32>, usize, u32)> = Vec::new();
        for (pi, item) in live.iter().enumerate() {
            let last = *item.hyp.tokens.last().expect("non-empty");
            let (logp, next) = checked_step(scorer, &item.state, last)?;
            next_states.push(next);
            for (t, &lp) in logp.iter().enumerate() {
                let mut tokens = item.hyp.tokens.clone();
                tokens.push(t as u32);
                cands.push((item.hyp.log_prob + lp, tokens, pi, t as u32));
            }
        }
        cands.sort_unstable_by(|a, b| {
            b.0.partial_cmp(&a.0)
                .expect("finite scores")
                .then_with(|| a.1.cmp(&b.1))
        });
        cands.truncate(cfg.beam_size);

        let mut next_live = Vec::with_capacity(cands.len());
        for (cum, tokens, pi, tok) in cands {
            let hyp = Hypothesis {
                tokens,
                log_prob: cum,
                finished: tok == EOS_ID,
            };
            if hyp.finished {
                pool.push(hyp);
            } else {
                next_live.push(Frontier {
                    hyp,
                    state: next_states[pi].clone(),
                });
            }
        }
        live = next_live;

        if !pool.is_empty() && !live.is_empty() {
            let best_pool = pool
                .iter()
                .map(|h| h.normalized_score(cfg.length_alpha))
                .collect::<Result<Vec<f64>>>()?
                .into_iter()
                .fold(f64::NEG_INFINITY, f64::max);
            let best_bound = live
                .iter()
                .map(|it| {
                    let c = it.hyp.log_prob;
                    if c <= 0.0 {
                        c / lp_cap
                    } else {
                        c
                    }
                })
                .fold(f64::NEG_INFINITY, f64::max);
            if best_bound < best_pool {
                break;
            }
        }
    }

    // Anything still live ran into the cap: it competes unfinished. Live
    // hypotheses dropped by the early stop were proven unable to win.
    for item in live {
        if item.hyp.emitted_len() == cfg.max_len {
            pool.push(item.hyp);
        }
    }
    if pool.is_empty() {
        return Err(Error::Invalid(
            "beam search produced no hypotheses".to_string(),
        ));
    }

    let mut scored: Vec<(Hypothesis, f64)> = pool
        .into_iter()
        .map(|h| {
            let s = h.normalized_score(cfg.length_alpha)?;
            Ok((h, s))
        })
        .collect::<Result<Vec<_>>>()?;
    scored.sort_by(|a, b| {
        if better(&a.0, a.1, &b.0, b.1) {
            std::cmp::Ordering::Less
        } else if better(&b.0, b.1, &a.0, a.1) {
            std::cmp::Ordering::Greater
        } else {
            std::cmp::Ordering::Equal
        }
    });
    scored.truncate(cfg.beam_size);
    let winner = scored[0].0.clone();
    Ok((winner, scored.into_iter().map(|(h, _)| h).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Deterministic toy scorer: log-probs are a pure function of the token
    /// prefix, derived from a hash, so exhaustive enumeration can replay the
    /// exact same distribution.
    struct TableScorer {
        vocab: usize,
        salt: u64,
    }

    fn mix(mut h: u64, v: u64) -> u64 {
        h ^= v.wrapping_add(0x9e3779b97f4a7c15);
        h = h.wrapping_mul(0xbf58476d1ce4e5b9);
        h ^ (h >> 31)
    }

    impl TableScorer {
        fn logits(&self, prefix: &[u32]) -> Vec<f64> {
            let mut h = self.salt;
            for &t in prefix {
                h = mix(h, t as u64 + 1);
            }
            (0..self.vocab)
                .map(|i| {
                    let r = mix(h, i as u64 + 101);
                    // Map to [-2, 2] for a non-degenerate distribution.
                    (r as f64 / u64::MAX as f64) * 4.0 - 2.0
                })
                .collect()
        }
    }

    fn log_softmax(logits: &[f64]) -> Vec<f64> {
        let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + logits.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
        logits.iter().map(|x| x - lse).collect()
    }

    impl StepScorer for TableScorer {
        type State = Vec<u32>;

        fn vocab_size(&self) -> usize {
            self.vocab
        }

        fn initial_state(&mut self) -> Result<Vec<u32>> {
            Ok(Vec::new())
        }

        fn step(&mut self, state: &Vec<u32>, input_token: u32) -> Result<(Vec<f64>, Vec<u32>)> {
            let mut next = state.clone();
            next.push(input_token);
            Ok((log_softmax(&self.logits(&next)), next))
        }
    }

    /// Scorer that puts (essentially) all mass on one fixed sequence.
    struct PointMass {
        vocab: usize,
        seq: Vec<u32>,
    }

    impl StepScorer for PointMass {
        type State = usize;

        fn vocab_size(&self) -> usize {
            self.vocab
        }

        fn initial_state(&mut self) -> Result<usize> {
            Ok(0)
        }

        fn step(&mut self, state: &usize, _input: u32) -> Result<(Vec<f64>, usize)> {
            let want = self.seq.get(*state).copied().unwrap_or(EOS_ID);
            let logp = (0..self.vocab)
                .map(|t| if t as u32 == want { 0.0 } else { -40.0 })
                .collect();
            Ok((logp, state + 1))
        }
    }

    /// Every completed sequence of emitted tokens up to max_len: EOS ends a
    /// sequence early, otherwise it is cut off (unfinished) at the cap.
    fn enumerate_all(scorer: &TableScorer, max_len: usize) -> Vec<Hypothesis> {
        let mut out = Vec::new();
        let mut stack: Vec<(Vec<u32>, f64)> = vec![(vec![BOS_ID], 0.0)];
        while let Some((tokens, cum)) = stack.pop() {
            let emitted = tokens.len() - 1;
            if emitted == max_len {
                out.push(Hypothesis {
                    tokens,
                    log_prob: cum,
                    finished: false,
                });
                continue;
            }
            let logp = log_softmax(&scorer.logits(&tokens));
            for t in 0..scorer.vocab {
                let mut ext = tokens.clone();
                ext.push(t as u32);
                let hyp_cum = cum + logp[t];
                if t as u32 == EOS_ID {
                    out.push(Hypothesis {
                        tokens: ext,
                        log_prob: hyp_cum,
                        finished: true,
                    });
                } else {
                    stack.push((ext, hyp_cum));
                }
            }
        }
        out
    }

    fn argmax_hyp(pool: &[Hypothesis], alpha: f64) -> Hypothesis {
        let mut best: Option<(Hypothesis, f64)> = None;
        for h in pool {
            let s = h.normalized_score(alpha).unwrap();
            match &best {
                None => best = Some((h.clone(), s)),
                Some((bh, bs)) => {
                    if better(h, s, bh, *bs) {
                        best = Some((h.clone(), s));
                    }
                }
            }
        }
        best.unwrap().0
    }

    #[test]
    fn wide_beam_matches_exhaustive_enumeration() {
        // vocab 3, max_len 3: 27 candidate paths fit entirely in a beam of 27,
        // so the search degenerates to brute force and must agree with it.
        let cfg = BeamConfig {
            beam_size: 27,
            length_alpha: 0.6,
            max_len: 3,
        };
        for salt in 0..25u64 {
            let mut scorer = TableScorer { vocab: 3, salt };
            let all = enumerate_all(&scorer, cfg.max_len);
            let oracle = argmax_hyp(&all, cfg.length_alpha);
            let (winner, _) = beam_search(&mut scorer, &cfg).unwrap();
            assert_eq!(winner.tokens, oracle.tokens, "salt {}", salt);
            assert!((winner.log_prob - oracle.log_prob).abs() < 1e-12);
        }
    }

    #[test]
    fn beam_one_equals_greedy() {
        let cfg = BeamConfig {
            beam_size: 1,
            length_alpha: 0.6,
            max_len: 8,
        };
        for salt in 0..20u64 {
            let mut a = TableScorer { vocab: 5, salt };
            let mut b = TableScorer { vocab: 5, salt };
            let g = greedy_decode(&mut a, cfg.max_len).unwrap();
            let (w, _) = beam_search(&mut b, &cfg).unwrap();
            assert_eq!(g.tokens, w.tokens, "salt {}", salt);
            assert!((g.log_prob - w.log_prob).abs() < 1e-12);
            assert_eq!(g.finished, w.finished);
        }
    }

    #[test]
    fn beam_never_normalizes_below_greedy() {
        let cfg = BeamConfig {
            beam_size: 5,
            length_alpha: 0.6,
            max_len: 10,
        };
        for salt in 0..30u64 {
            let mut a = TableScorer { vocab: 6, salt };
            let mut b = TableScorer { vocab: 6, salt };
            let g = greedy_decode(&mut a, cfg.max_len).unwrap();
            let (w, _) = beam_search(&mut b, &cfg).unwrap();
            if g.finished && w.finished {
                let gs = g.normalized_score(cfg.length_alpha).unwrap();
                let ws = w.normalized_score(cfg.length_alpha).unwrap();
                assert!(ws >= gs - 1e-12, "salt {}: beam {} < greedy {}", salt, ws, gs);
            }
        }
    }

    #[test]
    fn point_mass_sequence_is_recovered_with_zero_score() {
        let mut scorer = PointMass {
            vocab: 5,
            seq: vec![3, 4, 2],
        };
        let cfg = BeamConfig {
            beam_size: 5,
            length_alpha: 0.6,
            max_len: 10,
        };
        let (w, _) = beam_search(&mut scorer, &cfg).unwrap();
        assert_eq!(w.tokens, vec![BOS_ID, 3, 4, 2]);
        assert!(w.finished);
        assert!(w.log_prob.abs() < 1e-9);
        assert!(w.normalized_score(0.6).unwrap().abs() < 1e-9);
    }

    #[test]
    fn greedy_stops_at_first_eos() {
        let mut scorer = PointMass {
            vocab: 4,
            seq: vec![3, 2, 3, 3],
        };
        let h = greedy_decode(&mut scorer, 10).unwrap();
        assert_eq!(h.tokens, vec![BOS_ID, 3, 2]);
        assert!(h.finished);
    }

    #[test]
    fn greedy_respects_max_len() {
        // Point mass on an endless stream of 3s: never emits EOS.
        let mut scorer = PointMass {
            vocab: 4,
            seq: vec![3; 64],
        };
        let h = greedy_decode(&mut scorer, 6).unwrap();
        assert_eq!(h.emitted_len(), 6);
        assert!(!h.finished);
    }

    #[test]
    fn unfinished_hypotheses_compete_at_the_cap() {
        let mut scorer = PointMass {
            vocab: 4,
            seq: vec![3; 64],
        };
        let cfg = BeamConfig {
            beam_size: 3,
            length_alpha: 0.6,
            max_len: 4,
        };
        let (w, nbest) = beam_search(&mut scorer, &cfg).unwrap();
        assert_eq!(w.tokens, vec![BOS_ID, 3, 3, 3, 3]);
        assert!(!w.finished);
        assert!(!nbest.is_empty());
    }

    #[test]
    fn monotonic_log_prob_along_winner() {
        // Re-walk the winner's tokens, checking the cumulative log-prob only
        // ever decreases.
        let mut scorer = TableScorer { vocab: 5, salt: 9 };
        let cfg = BeamConfig {
            beam_size: 5,
            length_alpha: 0.6,
            max_len: 8,
        };
        let (w, _) = beam_search(&mut scorer, &cfg).unwrap();
        let mut replay = TableScorer { vocab: 5, salt: 9 };
        let mut state = replay.initial_state().unwrap();
        let mut cum = 0.0;
        for win in w.tokens.windows(2) {
            let (logp, next) = replay.step(&state, win[0]).unwrap();
            let step = logp[win[1] as usize];
            assert!(step <= 1e-12);
            cum += step;
            state = next;
        }
        assert!((cum - w.log_prob).abs() < 1e-9);
    }

    #[test]
    fn determinism_across_runs() {
        let cfg = BeamConfig {
            beam_size: 4,
            length_alpha: 0.6,
            max_len: 7,
        };
        let mut a = TableScorer { vocab: 5, salt: 42 };
        let mut b = TableScorer { vocab: 5, salt: 42 };
        let (wa, na) = beam_search(&mut a, &cfg).unwrap();
        let (wb, nb) = beam_search(&mut b, &cfg).unwrap();
        assert_eq!(wa, wb);
        assert_eq!(na, nb);
    }

    #[test]
    fn nbest_is_sorted_by_normalized_score() {
        let cfg = BeamConfig {
            beam_size: 6,
            length_alpha: 0.6,
            max_len: 6,
        };
        let mut scorer = TableScorer { vocab: 4, salt: 5 };
        let (_, nbest) = beam_search(&mut scorer, &cfg).unwrap();
        let scores: Vec<f64> = nbest
            .iter()
            .map(|h| h.normalized_score(cfg.length_alpha).unwrap())
            .collect();
        for w in scores.windows(2) {
            assert!(w[0] >= w[1] - 1e-12);
        }
    }
}
