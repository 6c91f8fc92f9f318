//! Beam search: whole-utterance (offline) and incremental over accumulated
//! chunks.
//!
//! Both modes share one extension loop. Each incremental step restarts from
//! the committed stable prefix, re-scores it over all audio received so far,
//! and extends until the frontier token's estimated endpoint reaches the end
//! of the accumulated audio (there is no point scoring past the evidence),
//! the best hypothesis finishes, or the token budget runs out. At stream end
//! (flush) the endpoint rule is dropped and the beam runs to completion.

use crate::clock::Clock;
use crate::config::{SessionConfig, TimeMode};
use crate::error::{Error, Result};
use crate::features::{Chunk, FeatureStream};
use crate::hyp::{cmp_hypotheses, Beam, Hypothesis, TokenId};
use crate::scoring::{Scorer, StepScore};
use crate::stability;
use crate::vocab::Vocabulary;
use std::cmp::Ordering;
use std::sync::Arc;

/// One round of beam extension: fan out every unfinished hypothesis over the
/// whole vocabulary, carry finished hypotheses unchanged, rank everything
/// and keep the top `beam_size`. `step_scores` aligns 1:1 with
/// `beam.hypotheses`; entries for finished hypotheses are `None`.
pub fn beam_extend(
    beam: &Beam,
    step_scores: &[Option<StepScore>],
    beam_size: usize,
    eos_id: TokenId,
    length_norm: bool,
) -> Result<Beam> {
    if beam.is_empty() {
        return Err(Error::EmptyBeam);
    }
    if beam_size == 0 {
        return Err(Error::InvalidConfig("beam_size must be >= 1".into()));
    }
    if step_scores.len() != beam.hypotheses.len() {
        return Err(Error::InvalidConfig(format!(
            "{} step scores for {} hypotheses",
            step_scores.len(),
            beam.hypotheses.len()
        )));
    }

    struct Candidate {
        log_score: f64,
        parent: usize,
        token: Option<TokenId>, // None: carried finished hypothesis
        len: usize,
    }

    let mut candidates: Vec<Candidate> = Vec::new();
    for (i, (hyp, score)) in beam.hypotheses.iter().zip(step_scores).enumerate() {
        if hyp.finished {
            candidates.push(Candidate {
                log_score: hyp.log_score,
                parent: i,
                token: None,
                len: hyp.len(),
            });
            continue;
        }
        let score = score.as_ref().ok_or_else(|| {
            Error::InvalidConfig(format!("missing step score for unfinished hypothesis {i}"))
        })?;
        for (v, &lp) in score.log_probs.iter().enumerate() {
            candidates.push(Candidate {
                log_score: hyp.log_score + lp,
                parent: i,
                token: Some(v as TokenId),
                len: hyp.len() + 1,
            });
        }
    }

    let rank = |c: &Candidate| {
        if length_norm && c.len > 0 {
            c.log_score / c.len as f64
        } else {
            c.log_score
        }
    };
    let lex = |c: &Candidate| {
        beam.hypotheses[c.parent]
            .tokens
            .iter()
            .copied()
            .chain(c.token)
    };
    candidates.sort_by(|a, b| match rank(b).partial_cmp(&rank(a)) {
        Some(Ordering::Equal) | None => lex(a).cmp(lex(b)),
        Some(ord) => ord,
    });
    candidates.truncate(beam_size);

    // Materialize survivors; one shared attention buffer per parent.
    let attention: Vec<Option<Arc<[f64]>>> = step_scores
        .iter()
        .map(|s| s.as_ref().map(|s| Arc::from(s.attention.as_slice())))
        .collect();
    let hypotheses: Vec<Hypothesis> = candidates
        .into_iter()
        .map(|c| {
            let parent = &beam.hypotheses[c.parent];
            match c.token {
                None => parent.clone(),
                Some(tok) => {
                    let mut tokens = Vec::with_capacity(parent.tokens.len() + 1);
                    tokens.extend_from_slice(&parent.tokens);
                    tokens.push(tok);
                    let mut att = Vec::with_capacity(parent.attention.len() + 1);
                    att.extend_from_slice(&parent.attention);
                    att.push(attention[c.parent].as_ref().unwrap().clone());
                    Hypothesis {
                        tokens,
                        log_score: c.log_score,
                        attention: att,
                        finished: tok == eos_id,
                    }
                }
            }
        })
        .collect();

    Ok(Beam {
        hypotheses,
        committed_prefix: beam.committed_prefix.clone(),
    })
}

/// Shared extension loop. Returns the extended beam and the number of
/// scorer calls made.
fn run_extension(
    scorer: &dyn Scorer,
    features: &FeatureStream,
    mut beam: Beam,
    beam_size: usize,
    max_output_tokens: usize,
    attention_mass_threshold: f64,
    at_stream_end: bool,
    length_norm: bool,
) -> Result<(Beam, usize)> {
    if features.is_empty() {
        return Ok((beam, 0));
    }
    let eos = scorer.eos_id();
    let mut calls = 0usize;
    loop {
        let best = beam.best().ok_or(Error::EmptyBeam)?;
        if best.finished || best.len() >= max_output_tokens {
            break;
        }
        if !at_stream_end && !best.is_empty() {
            let t_c = stability::estimate_endpoint(
                &best.attention,
                best.len() - 1,
                attention_mass_threshold,
            )?;
            if t_c + 1 >= features.len() {
                break; // the frontier already consumed all received audio
            }
        }
        let mut scores: Vec<Option<StepScore>> = Vec::with_capacity(beam.hypotheses.len());
        for h in &beam.hypotheses {
            if h.finished {
                scores.push(None);
            } else {
                scores.push(Some(scorer.score_step(features, &h.tokens)?));
                calls += 1;
            }
        }
        beam = beam_extend(&beam, &scores, beam_size, eos, length_norm)?;
    }
    Ok((beam, calls))
}

fn pick_result(beam: &Beam, length_norm: bool) -> Result<Hypothesis> {
    let mut best_finished: Option<&Hypothesis> = None;
    for h in &beam.hypotheses {
        if h.finished
            && best_finished
                .map(|b| cmp_hypotheses(h, b, length_norm) == Ordering::Less)
                .unwrap_or(true)
        {
            best_finished = Some(h);
        }
    }
    best_finished
        .or(beam.best())
        .cloned()
        .ok_or(Error::EmptyBeam)
}

/// Decode a whole utterance at once: extend from the empty prefix until the
/// top hypotheses finish or the token budget runs out, and return the best
/// finished hypothesis (or the best overall if none finished).
pub fn beam_search_offline(
    stream: &FeatureStream,
    scorer: &dyn Scorer,
    beam_size: usize,
    max_output_tokens: usize,
    length_norm: bool,
) -> Result<Hypothesis> {
    if stream.is_empty() {
        return Err(Error::EmptyInput("feature stream"));
    }
    if max_output_tokens == 0 {
        return Err(Error::InvalidConfig("max_output_tokens must be >= 1".into()));
    }
    if stream.dim() != scorer.feature_dim() {
        return Err(Error::DimensionMismatch {
            expected: scorer.feature_dim(),
            got: stream.dim(),
        });
    }
    let beam = Beam::seeded(Hypothesis::root(), Vec::new());
    let (beam, _) = run_extension(
        scorer,
        stream,
        beam,
        beam_size,
        max_output_tokens,
        0.95,
        true,
        length_norm,
    )?;
    pick_result(&beam, length_norm)
}

/// A strictly sequential streaming decode over one utterance. Chunks are
/// accumulated; each step restarts beam extension from the committed stable
/// prefix and returns the unstable beam for stability detection.
pub struct IncrementalSession<'a> {
    config: SessionConfig,
    scorer: &'a dyn Scorer,
    vocab: &'a Vocabulary,
    clock: &'a dyn Clock,
    features: FeatureStream,
    committed: Vec<TokenId>,
    beam: Beam,
    finalized: bool,
    audio_end_ms: f64,
    step_compute_ms: Vec<f64>,
    persistence: usize,
    prev_best: Vec<TokenId>,
}

impl<'a> IncrementalSession<'a> {
    pub fn new(
        config: SessionConfig,
        scorer: &'a dyn Scorer,
        vocab: &'a Vocabulary,
        clock: &'a dyn Clock,
        dim: usize,
        frame_period_ms: f64,
    ) -> Result<Self> {
        config.validate()?;
        if dim != scorer.feature_dim() {
            return Err(Error::DimensionMismatch {
                expected: scorer.feature_dim(),
                got: dim,
            });
        }
        if vocab.size() != scorer.vocab_size() {
            return Err(Error::InvalidConfig(format!(
                "vocabulary size {} does not match scorer vocabulary {}",
                vocab.size(),
                scorer.vocab_size()
            )));
        }
        Ok(Self {
            config,
            scorer,
            vocab,
            clock,
            features: FeatureStream::new(dim, frame_period_ms)?,
            committed: Vec::new(),
            beam: Beam::seeded(Hypothesis::root(), Vec::new()),
            finalized: false,
            audio_end_ms: 0.0,
            step_compute_ms: Vec::new(),
            persistence: 0,
            prev_best: Vec::new(),
        })
    }

    /// Accumulate one chunk and rebuild the unstable beam from the committed
    /// prefix. Records the step's compute time against the session clock.
    pub fn step(&mut self, chunk: &Chunk) -> Result<&Beam> {
        if self.finalized {
            return Err(Error::SessionFinalized);
        }
        if !chunk.flush && chunk.frames.is_empty() {
            return Err(Error::EmptyInput("chunk frames"));
        }
        if chunk.audio_end_ms + 1e-9 < self.audio_end_ms {
            return Err(Error::InvalidConfig(format!(
                "chunk audio_end_ms went backwards ({} after {})",
                chunk.audio_end_ms, self.audio_end_ms
            )));
        }
        self.features.extend_from_frames(&chunk.frames)?;
        self.audio_end_ms = chunk.audio_end_ms;

        let t0 = self.clock.now_ms();
        let mut calls = 0usize;

        // Re-derive the committed prefix as the seed hypothesis over the
        // accumulated audio.
        let mut seed = Hypothesis::root();
        if !self.features.is_empty() {
            for &tok in &self.committed {
                debug_assert!(!seed.finished, "tokens after eos in committed prefix");
                let s = self.scorer.score_step(&self.features, &seed.tokens)?;
                calls += 1;
                seed.log_score += s.log_probs[tok as usize];
                seed.attention.push(Arc::from(s.attention.as_slice()));
                seed.tokens.push(tok);
                if tok == self.scorer.eos_id() {
                    seed.finished = true;
                    break;
                }
            }
        }
        let beam = Beam::seeded(seed, self.committed.clone());
        let (beam, ext_calls) = run_extension(
            self.scorer,
            &self.features,
            beam,
            self.config.beam_size,
            self.config.max_output_tokens,
            self.config.attention_mass_threshold,
            chunk.flush,
            self.config.length_norm,
        )?;
        calls += ext_calls;

        if self.config.time_mode == TimeMode::Simulated {
            self.clock
                .advance_ms(calls as f64 * self.config.sim_score_cost_ms);
        }
        self.step_compute_ms.push(self.clock.now_ms() - t0);

        // Prefix-persistence bookkeeping (logged, never acted on): how many
        // consecutive steps the best hypothesis extended its predecessor.
        let best_tokens = beam.best().map(|h| h.tokens.clone()).unwrap_or_default();
        if !self.prev_best.is_empty() && best_tokens.starts_with(&self.prev_best) {
            self.persistence += 1;
        } else {
            self.persistence = 1;
        }
        self.prev_best = best_tokens;

        self.beam = beam;
        if chunk.flush {
            self.finalized = true;
        }
        Ok(&self.beam)
    }

    /// Make `extension` immutable and prune hypotheses that contradict it.
    pub fn commit(&mut self, extension: &[TokenId]) {
        self.committed.extend_from_slice(extension);
        self.beam.retain_extending(&self.committed);
    }

    pub fn committed(&self) -> &[TokenId] {
        &self.committed
    }

    pub fn beam(&self) -> &Beam {
        &self.beam
    }

    /// Uncommitted tail of the current best hypothesis.
    pub fn remaining_best(&self) -> Vec<TokenId> {
        self.beam
            .best()
            .map(|h| h.tokens[self.committed.len()..].to_vec())
            .unwrap_or_default()
    }

    pub fn audio_end_ms(&self) -> f64 {
        self.audio_end_ms
    }

    pub fn frame_period_ms(&self) -> f64 {
        self.features.frame_period_ms()
    }

    pub fn step_compute_ms(&self) -> &[f64] {
        &self.step_compute_ms
    }

    pub fn last_compute_ms(&self) -> f64 {
        self.step_compute_ms.last().copied().unwrap_or(0.0)
    }

    pub fn persistence(&self) -> usize {
        self.persistence
    }

    pub fn finalized(&self) -> bool {
        self.finalized
    }

    pub fn vocab(&self) -> &Vocabulary {
        self.vocab
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::SimClock;
    use crate::features::chunk_stream;
    use crate::scoring::{build_synthetic_scorer, FRAMES_PER_TOKEN};
    use crate::vocab::Vocabulary;

    fn test_vocab(n: usize) -> Vocabulary {
        let mut tokens = vec!["<eos>".to_string()];
        for i in 1..n {
            tokens.push(format!("\u{2581}t{i}"));
        }
        Vocabulary::new(tokens, "\u{2581}", 0).unwrap()
    }

    fn encode(tokens: &[TokenId], dim: usize, tail: usize) -> FeatureStream {
        let total = (tokens.len() + 1) * FRAMES_PER_TOKEN + tail;
        let mut rows = Vec::with_capacity(total);
        for i in 0..total {
            let seg = i / FRAMES_PER_TOKEN;
            let tok = tokens.get(seg).copied().unwrap_or(0);
            let mut row = vec![tok as f64];
            row.resize(dim, 0.1);
            rows.push(row);
        }
        FeatureStream::from_rows(dim, 10.0, rows).unwrap()
    }

    fn uniform_scores(n_hyps: usize, vocab: usize) -> Vec<Option<StepScore>> {
        let lp = (1.0 / vocab as f64).ln();
        (0..n_hyps)
            .map(|_| {
                Some(StepScore {
                    log_probs: vec![lp; vocab],
                    attention: vec![1.0],
                })
            })
            .collect()
    }

    #[test]
    fn extend_fans_out_and_ranks() {
        let beam = Beam::seeded(Hypothesis::root(), Vec::new());
        let scores = vec![Some(StepScore {
            log_probs: vec![-2.0, -1.0, -3.0],
            attention: vec![1.0],
        })];
        let out = beam_extend(&beam, &scores, 3, 0, false).unwrap();
        assert_eq!(out.hypotheses.len(), 3);
        assert_eq!(out.hypotheses[0].tokens, vec![1]);
        assert_eq!(out.hypotheses[1].tokens, vec![0]);
        assert_eq!(out.hypotheses[2].tokens, vec![2]);
        assert!(out.hypotheses[1].finished); // token 0 is eos
    }

    #[test]
    fn extend_beam_size_one_is_greedy() {
        let beam = Beam::seeded(Hypothesis::root(), Vec::new());
        let scores = vec![Some(StepScore {
            log_probs: vec![-2.0, -0.5, -3.0],
            attention: vec![1.0],
        })];
        let out = beam_extend(&beam, &scores, 1, 0, false).unwrap();
        assert_eq!(out.hypotheses.len(), 1);
        assert_eq!(out.hypotheses[0].tokens, vec![1]);
    }

    #[test]
    fn extend_ties_break_lexicographically() {
        let beam = Beam {
            hypotheses: vec![
                Hypothesis {
                    tokens: vec![2],
                    log_score: -1.0,
                    attention: vec![Arc::from(&[1.0][..])],
                    finished: false,
                },
                Hypothesis {
                    tokens: vec![1],
                    log_score: -1.0,
                    attention: vec![Arc::from(&[1.0][..])],
                    finished: false,
                },
            ],
            committed_prefix: Vec::new(),
        };
        let out = beam_extend(&beam, &uniform_scores(2, 3), 4, 0, false).unwrap();
        // all extensions score equally; lexicographic order decides
        let seqs: Vec<Vec<TokenId>> = out.hypotheses.iter().map(|h| h.tokens.clone()).collect();
        assert_eq!(seqs, vec![vec![1, 0], vec![1, 1], vec![1, 2], vec![2, 0]]);
    }

    #[test]
    fn extend_carries_finished() {
        let beam = Beam {
            hypotheses: vec![
                Hypothesis {
                    tokens: vec![1, 0],
                    log_score: -0.1,
                    attention: Vec::new(),
                    finished: true,
                },
                Hypothesis {
                    tokens: vec![1],
                    log_score: -0.5,
                    attention: vec![Arc::from(&[1.0][..])],
                    finished: false,
                },
            ],
            committed_prefix: Vec::new(),
        };
        let mut scores = uniform_scores(2, 3);
        scores[0] = None;
        let out = beam_extend(&beam, &scores, 2, 0, false).unwrap();
        assert!(out.hypotheses[0].finished);
        assert_eq!(out.hypotheses[0].tokens, vec![1, 0]);
    }

    #[test]
    fn extend_empty_beam_errors() {
        let beam = Beam {
            hypotheses: Vec::new(),
            committed_prefix: Vec::new(),
        };
        assert!(matches!(
            beam_extend(&beam, &[], 2, 0, false),
            Err(Error::EmptyBeam)
        ));
    }

    #[test]
    fn offline_recovers_planted_sequence() {
        let vocab = test_vocab(5);
        let scorer = build_synthetic_scorer(3, &vocab, 2).unwrap();
        let planted: Vec<TokenId> = vec![2, 1, 3];
        let stream = encode(&planted, 2, 5);
        let best = beam_search_offline(&stream, &scorer, 4, 16, false).unwrap();
        let mut expected = planted.clone();
        expected.push(0);
        assert_eq!(best.tokens, expected);
        assert!(best.finished);
        // greedy also recovers it: the planted path is per-step optimal
        let greedy = beam_search_offline(&stream, &scorer, 1, 16, false).unwrap();
        assert_eq!(greedy.tokens, expected);
    }

    #[test]
    fn offline_is_deterministic() {
        let vocab = test_vocab(6);
        let scorer = build_synthetic_scorer(17, &vocab, 3).unwrap();
        let stream = encode(&[4, 2, 5, 1], 3, 6);
        let a = beam_search_offline(&stream, &scorer, 8, 32, false).unwrap();
        let b = beam_search_offline(&stream, &scorer, 8, 32, false).unwrap();
        assert_eq!(a.tokens, b.tokens);
        assert_eq!(a.log_score, b.log_score);
    }

    #[test]
    fn offline_small_oracle() {
        // beam covering the whole tree equals exhaustive enumeration
        let vocab = test_vocab(3);
        for seed in 0..10u64 {
            let scorer = build_synthetic_scorer(seed, &vocab, 1).unwrap();
            let stream = encode(&[1, 2], 1, 3);
            let max_len = 4;
            let best = beam_search_offline(&stream, &scorer, 81, max_len, false).unwrap();

            // exhaustive: all sequences of non-eos tokens + eos, length <= 4
            let mut best_score = f64::NEG_INFINITY;
            let mut best_tokens: Vec<TokenId> = Vec::new();
            let mut stack: Vec<Vec<TokenId>> = vec![Vec::new()];
            while let Some(prefix) = stack.pop() {
                let s = scorer.score_step(&stream, &prefix).unwrap();
                // finishing here
                let fin_score: f64 = prefix
                    .iter()
                    .scan(Vec::new(), |acc: &mut Vec<TokenId>, &t| {
                        let sc = scorer.score_step(&stream, acc).unwrap();
                        acc.push(t);
                        Some(sc.log_probs[t as usize])
                    })
                    .sum::<f64>()
                    + s.log_probs[0];
                let mut fin_tokens = prefix.clone();
                fin_tokens.push(0);
                if fin_score > best_score
                    || (fin_score == best_score && fin_tokens < best_tokens)
                {
                    best_score = fin_score;
                    best_tokens = fin_tokens;
                }
                if prefix.len() + 1 < max_len {
                    for v in 1..3u32 {
                        let mut p = prefix.clone();
                        p.push(v);
                        stack.push(p);
                    }
                }
            }
            assert_eq!(best.tokens, best_tokens, "seed {seed}");
        }
    }

    #[test]
    fn offline_rejects_bad_inputs() {
        let vocab = test_vocab(4);
        let scorer = build_synthetic_scorer(1, &vocab, 2).unwrap();
        let empty = FeatureStream::new(2, 10.0).unwrap();
        assert!(beam_search_offline(&empty, &scorer, 4, 8, false).is_err());
        let stream = encode(&[1], 2, 2);
        assert!(beam_search_offline(&stream, &scorer, 4, 0, false).is_err());
    }

    #[test]
    fn first_step_matches_offline_on_same_frames() {
        let vocab = test_vocab(5);
        let scorer = build_synthetic_scorer(21, &vocab, 2).unwrap();
        let planted: Vec<TokenId> = vec![1, 4, 2, 3];
        let stream = encode(&planted, 2, 4);
        let chunks = chunk_stream(&stream, 300.0).unwrap();

        let clock = SimClock::new();
        let mut session = IncrementalSession::new(
            SessionConfig::default(),
            &scorer,
            &vocab,
            &clock,
            2,
            10.0,
        )
        .unwrap();
        let beam = session.step(&chunks[0]).unwrap();
        let incr_best = beam.best().unwrap().tokens.clone();

        let truncated = stream.prefix(chunks[0].frames.len());
        let offline = beam_search_offline(&truncated, &scorer, 8, 256, false).unwrap();
        let mut offline_tokens = offline.tokens.clone();
        if offline_tokens.last() == Some(&0) {
            offline_tokens.pop(); // offline runs to eos on the truncated audio
        }
        assert_eq!(incr_best, offline_tokens);
    }

    #[test]
    fn flush_extends_to_completion() {
        let vocab = test_vocab(5);
        let scorer = build_synthetic_scorer(8, &vocab, 2).unwrap();
        let planted: Vec<TokenId> = vec![3, 2];
        let stream = encode(&planted, 2, 3);
        let chunks = chunk_stream(&stream, 1000.0).unwrap();
        let clock = SimClock::new();
        let mut session = IncrementalSession::new(
            SessionConfig::default(),
            &scorer,
            &vocab,
            &clock,
            2,
            10.0,
        )
        .unwrap();
        for c in &chunks {
            session.step(c).unwrap();
        }
        let best = session.beam().best().unwrap();
        assert!(best.finished);
        assert_eq!(best.tokens, vec![3, 2, 0]);
        // chunk after flush is rejected
        assert!(matches!(
            session.step(&chunks[0]),
            Err(Error::SessionFinalized)
        ));
    }

    #[test]
    fn incremental_prefix_matches_offline_decode() {
        // with a prefix-consistent scorer, tokens decoded from partial audio
        // agree with the offline decode of the full stream
        let vocab = test_vocab(6);
        for seed in [5u64, 6, 7] {
            let scorer = build_synthetic_scorer(seed, &vocab, 2).unwrap();
            let planted: Vec<TokenId> = vec![2, 5, 1, 4, 3];
            let stream = encode(&planted, 2, 6);
            let offline = beam_search_offline(&stream, &scorer, 8, 256, false).unwrap();

            let chunks = chunk_stream(&stream, 160.0).unwrap();
            let clock = SimClock::new();
            let mut session = IncrementalSession::new(
                SessionConfig::default(),
                &scorer,
                &vocab,
                &clock,
                2,
                10.0,
            )
            .unwrap();
            for c in &chunks {
                let beam = session.step(c).unwrap();
                let best = beam.best().unwrap();
                let k = best.tokens.len().min(offline.tokens.len());
                assert_eq!(&best.tokens[..k], &offline.tokens[..k], "seed {seed}");
            }
            assert_eq!(session.beam().best().unwrap().tokens, offline.tokens);
        }
    }

    #[test]
    fn commits_restrict_the_beam() {
        let vocab = test_vocab(6);
        let scorer = build_synthetic_scorer(13, &vocab, 2).unwrap();
        let planted: Vec<TokenId> = vec![2, 4, 1, 5, 3];
        let stream = encode(&planted, 2, 5);
        let chunks = chunk_stream(&stream, 200.0).unwrap();
        let clock = SimClock::new();
        let mut session = IncrementalSession::new(
            SessionConfig::default(),
            &scorer,
            &vocab,
            &clock,
            2,
            10.0,
        )
        .unwrap();
        for (i, c) in chunks.iter().enumerate() {
            session.step(c).unwrap();
            if i == 1 {
                // commit the first agreed token and check the invariant
                let shared = crate::stability::shared_prefix(session.beam());
                if !shared.is_empty() {
                    session.commit(&shared[..1]);
                }
            }
            let committed = session.committed().to_vec();
            for h in &session.beam().hypotheses {
                assert!(h.tokens.starts_with(&committed));
            }
        }
    }

    #[test]
    fn uniform_ensemble_recovers_planted_sequence() {
        use crate::scoring::EnsembleScorer;
        let vocab = test_vocab(6);
        let planted: Vec<TokenId> = vec![5, 1, 3, 2];
        let stream = encode(&planted, 2, 6);
        let members: Vec<std::sync::Arc<dyn crate::scoring::Scorer>> = vec![
            std::sync::Arc::new(build_synthetic_scorer(1, &vocab, 2).unwrap()),
            std::sync::Arc::new(build_synthetic_scorer(2, &vocab, 2).unwrap()),
        ];
        let ensemble = EnsembleScorer::uniform(members).unwrap();
        let best = beam_search_offline(&stream, &ensemble, 8, 64, false).unwrap();
        let mut expected = planted;
        expected.push(0);
        assert_eq!(best.tokens, expected);
        assert!(ensemble.provides_endpoint_attention());
    }

    #[test]
    fn out_of_order_chunks_rejected() {
        let vocab = test_vocab(5);
        let scorer = build_synthetic_scorer(4, &vocab, 2).unwrap();
        let stream = encode(&[1, 2], 2, 3);
        let chunks = chunk_stream(&stream, 100.0).unwrap();
        let clock = SimClock::new();
        let mut session = IncrementalSession::new(
            SessionConfig::default(),
            &scorer,
            &vocab,
            &clock,
            2,
            10.0,
        )
        .unwrap();
        session.step(&chunks[0]).unwrap();
        assert!(session.step(&chunks[2]).is_err()); // skipped chunk 1
    }

    #[test]
    fn simulated_compute_cost_is_counted() {
        let vocab = test_vocab(5);
        let scorer = build_synthetic_scorer(4, &vocab, 2).unwrap();
        let stream = encode(&[1, 2], 2, 3);
        let chunks = chunk_stream(&stream, 10_000.0).unwrap();
        let clock = SimClock::new();
        let config = SessionConfig {
            sim_score_cost_ms: 2.0,
            ..SessionConfig::default()
        };
        let mut session =
            IncrementalSession::new(config, &scorer, &vocab, &clock, 2, 10.0).unwrap();
        session.step(&chunks[0]).unwrap();
        let compute = session.last_compute_ms();
        assert!(compute > 0.0);
        assert_eq!(compute % 2.0, 0.0); // integral number of scorer calls
        assert_eq!(clock.now_ms(), compute);
    }
}
