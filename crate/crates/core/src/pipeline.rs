//! Session orchestration: chunk wait, incremental inference, stability
//! detection, commit. Produces a commit log and the final transcript.
//!
//! Words are released conservatively: a decoded word becomes part of a
//! commit record only once nothing can glue onto it anymore (the next
//! committed token starts a new word, eos committed, or the stream
//! flushed). Committed tokens themselves are immutable immediately; the
//! holdback only affects which words a record reports, so every reported
//! word is final the moment it appears.
//!
//! The commit log is line-oriented text. Commit records carry the fields
//! `utt`, `commit_wall_ms`, `audio_consumed_ms`, `detector`, `tokens`,
//! `words`, tab-separated in that order. `#meta` and `#step` comment records
//! interleave with them so that a parsed log reconstructs the full
//! [`SessionResult`], including per-step compute times.

use crate::clock::Clock;
use crate::config::{DetectorMode, SessionConfig, TimeMode};
use crate::error::{Error, Result};
use crate::features::{chunk_stream, FeatureStream};
use crate::hyp::TokenId;
use crate::scoring::Scorer;
use crate::search::IncrementalSession;
use crate::stability::{detect, DetectContext, DetectorKind};
use crate::vocab::Vocabulary;

/// A stability-detector decision: which tokens became immutable, when, why.
#[derive(Debug, Clone, PartialEq)]
pub struct CommitRecord {
    pub tokens: Vec<TokenId>,
    /// Words finalized by this commit (see module docs on release timing).
    pub words: Vec<String>,
    pub commit_wall_ms: f64,
    pub audio_consumed_ms: f64,
    pub detector: DetectorKind,
    /// Index of the session step that produced this commit.
    pub step_index: usize,
}

/// Per-step bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub compute_ms: f64,
    pub audio_end_ms: f64,
    /// Consecutive steps the best hypothesis extended its predecessor.
    pub persistence: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SessionResult {
    pub commits: Vec<CommitRecord>,
    pub final_tokens: Vec<TokenId>,
    pub final_words: Vec<String>,
    pub steps: Vec<StepRecord>,
    pub audio_duration_ms: f64,
}

impl SessionResult {
    pub fn total_compute_ms(&self) -> f64 {
        self.steps.iter().map(|s| s.compute_ms).sum()
    }

    pub fn step_compute_ms(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.compute_ms).collect()
    }
}

/// Run one utterance end to end under the configured detector and time mode.
pub fn run_session(
    stream: &FeatureStream,
    config: &SessionConfig,
    scorer: &dyn Scorer,
    vocab: &Vocabulary,
    clock: &dyn Clock,
) -> Result<SessionResult> {
    config.validate()?;
    if stream.dim() != scorer.feature_dim() {
        return Err(Error::DimensionMismatch {
            expected: scorer.feature_dim(),
            got: stream.dim(),
        });
    }
    if config.detector_mode != DetectorMode::SharedOnly && !scorer.provides_endpoint_attention() {
        return Err(Error::InvalidConfig(
            "endpoint-based detection requires a scorer with an attention source".into(),
        ));
    }

    let chunks = chunk_stream(stream, config.chunk_ms)?;
    let mut session = IncrementalSession::new(
        config.clone(),
        scorer,
        vocab,
        clock,
        stream.dim(),
        stream.frame_period_ms(),
    )?;

    let eos = scorer.eos_id();
    let mut commits: Vec<CommitRecord> = Vec::new();
    let mut steps: Vec<StepRecord> = Vec::new();
    let mut released = 0usize;
    let mut accum_compute = 0.0;

    for (i, chunk) in chunks.iter().enumerate() {
        let mut chunk = chunk.clone();
        match config.time_mode {
            TimeMode::Simulated => {
                // Chunk cadence plus back-pressure from earlier compute.
                let arrival = i as f64 * config.chunk_ms + accum_compute;
                clock.advance_to_ms(arrival);
                chunk.arrival_wall_ms = arrival;
            }
            TimeMode::Wall => {
                chunk.arrival_wall_ms = clock.now_ms();
            }
        }

        session.step(&chunk)?;
        accum_compute += session.last_compute_ms();
        steps.push(StepRecord {
            compute_ms: session.last_compute_ms(),
            audio_end_ms: chunk.audio_end_ms,
            persistence: session.persistence(),
        });

        let (extension, kind) = if chunk.flush {
            (session.remaining_best(), DetectorKind::Flush)
        } else {
            let ctx = DetectContext {
                audio_end_ms: session.audio_end_ms(),
                frame_period_ms: session.frame_period_ms(),
                delta_threshold_ms: config.delta_threshold_ms,
                attention_mass_threshold: config.attention_mass_threshold,
                vocab,
            };
            detect(session.beam(), config.detector_mode, &ctx)?
        };

        // Flush always records (even empty); mid-stream only real commits do.
        if !extension.is_empty() || chunk.flush {
            session.commit(&extension);
            let committed = session.committed();
            let all_words = vocab.tokens_to_words(committed)?;
            let holdback = !chunk.flush && committed.last() != Some(&eos);
            let releasable = if holdback {
                all_words.len().saturating_sub(1)
            } else {
                all_words.len()
            };
            let words = if releasable > released {
                all_words[released..releasable].to_vec()
            } else {
                Vec::new()
            };
            released = released.max(releasable);
            commits.push(CommitRecord {
                tokens: extension,
                words,
                commit_wall_ms: clock.now_ms(),
                audio_consumed_ms: chunk.audio_end_ms,
                detector: kind,
                step_index: i,
            });
        }
    }

    let final_tokens = session.committed().to_vec();
    let final_words = vocab.tokens_to_words(&final_tokens)?;
    Ok(SessionResult {
        commits,
        final_tokens,
        final_words,
        steps,
        audio_duration_ms: stream.duration_ms(),
    })
}

// ── Commit log serialization ────────────────────────────────────────────────

/// One utterance's decoded session, as stored in a commit log.
#[derive(Debug, Clone, PartialEq)]
pub struct LoggedSession {
    pub utt: String,
    pub result: SessionResult,
}

pub fn format_log(sessions: &[LoggedSession]) -> String {
    let mut out = String::from("# streamdec commit log v1\n");
    for s in sessions {
        out.push_str(&format!(
            "#meta\tutt={}\taudio_duration_ms={:.3}\n",
            s.utt, s.result.audio_duration_ms
        ));
        let mut commit_iter = s.result.commits.iter().peekable();
        for (i, step) in s.result.steps.iter().enumerate() {
            out.push_str(&format!(
                "#step\tutt={}\tindex={}\tcompute_ms={:.3}\taudio_end_ms={:.3}\tpersistence={}\n",
                s.utt, i, step.compute_ms, step.audio_end_ms, step.persistence
            ));
            while let Some(c) = commit_iter.peek() {
                if c.step_index != i {
                    break;
                }
                let c = commit_iter.next().unwrap();
                let tokens: Vec<String> = c.tokens.iter().map(|t| t.to_string()).collect();
                out.push_str(&format!(
                    "utt={}\tcommit_wall_ms={:.3}\taudio_consumed_ms={:.3}\tdetector={}\ttokens={}\twords={}\n",
                    s.utt,
                    c.commit_wall_ms,
                    c.audio_consumed_ms,
                    c.detector.as_str(),
                    tokens.join(" "),
                    c.words.join(" ")
                ));
            }
        }
        // commits written for sessions without step records (hand-made logs)
        for c in commit_iter {
            let tokens: Vec<String> = c.tokens.iter().map(|t| t.to_string()).collect();
            out.push_str(&format!(
                "utt={}\tcommit_wall_ms={:.3}\taudio_consumed_ms={:.3}\tdetector={}\ttokens={}\twords={}\n",
                s.utt,
                c.commit_wall_ms,
                c.audio_consumed_ms,
                c.detector.as_str(),
                tokens.join(" "),
                c.words.join(" ")
            ));
        }
    }
    out
}

fn expect_field<'b>(
    name: &str,
    line_no: usize,
    part: Option<&'b str>,
    key: &str,
) -> Result<&'b str> {
    let part = part.ok_or_else(|| Error::parse(name, line_no, format!("missing field `{key}`")))?;
    part.strip_prefix(key)
        .and_then(|rest| rest.strip_prefix('='))
        .ok_or_else(|| Error::parse(name, line_no, format!("expected `{key}=`, got `{part}`")))
}

fn parse_f64(name: &str, line_no: usize, what: &str, v: &str) -> Result<f64> {
    v.parse()
        .map_err(|_| Error::parse(name, line_no, format!("bad {what} `{v}`")))
}

/// Parse a commit log back into per-utterance session results. Commit lines
/// attach to the most recent `#step` record of their utterance; bare logs
/// without step records replay with zero compute.
pub fn parse_log(name: &str, text: &str) -> Result<Vec<LoggedSession>> {
    let mut order: Vec<String> = Vec::new();
    let mut sessions: std::collections::HashMap<String, SessionResult> =
        std::collections::HashMap::new();

    fn entry<'s>(
        order: &mut Vec<String>,
        sessions: &'s mut std::collections::HashMap<String, SessionResult>,
        utt: &str,
    ) -> &'s mut SessionResult {
        if !sessions.contains_key(utt) {
            order.push(utt.to_string());
            sessions.insert(utt.to_string(), SessionResult::default());
        }
        sessions.get_mut(utt).unwrap()
    }

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim_end_matches('\n');
        if line.is_empty() {
            continue;
        }

        if let Some(rest) = line.strip_prefix("#meta\t") {
            let mut parts = rest.split('\t');
            let utt = expect_field(name, line_no, parts.next(), "utt")?.to_string();
            let dur = expect_field(name, line_no, parts.next(), "audio_duration_ms")?;
            let dur = parse_f64(name, line_no, "audio_duration_ms", dur)?;
            entry(&mut order, &mut sessions, &utt).audio_duration_ms = dur;
            continue;
        }
        if let Some(rest) = line.strip_prefix("#step\t") {
            let mut parts = rest.split('\t');
            let utt = expect_field(name, line_no, parts.next(), "utt")?.to_string();
            let index: usize = expect_field(name, line_no, parts.next(), "index")?
                .parse()
                .map_err(|_| Error::parse(name, line_no, "bad step index"))?;
            let compute =
                parse_f64(name, line_no, "compute_ms", expect_field(name, line_no, parts.next(), "compute_ms")?)?;
            let audio_end =
                parse_f64(name, line_no, "audio_end_ms", expect_field(name, line_no, parts.next(), "audio_end_ms")?)?;
            let persistence: usize = expect_field(name, line_no, parts.next(), "persistence")?
                .parse()
                .map_err(|_| Error::parse(name, line_no, "bad persistence"))?;
            let result = entry(&mut order, &mut sessions, &utt);
            if index != result.steps.len() {
                return Err(Error::parse(
                    name,
                    line_no,
                    format!("step index {index} out of order (expected {})", result.steps.len()),
                ));
            }
            result.steps.push(StepRecord {
                compute_ms: compute,
                audio_end_ms: audio_end,
                persistence,
            });
            continue;
        }
        if line.starts_with('#') {
            continue; // plain comment
        }

        // Commit record: utt, commit_wall_ms, audio_consumed_ms, detector,
        // tokens, words — tab-separated, fixed order.
        let mut parts = line.split('\t');
        let utt = expect_field(name, line_no, parts.next(), "utt")?.to_string();
        let wall = parse_f64(
            name,
            line_no,
            "commit_wall_ms",
            expect_field(name, line_no, parts.next(), "commit_wall_ms")?,
        )?;
        let audio = parse_f64(
            name,
            line_no,
            "audio_consumed_ms",
            expect_field(name, line_no, parts.next(), "audio_consumed_ms")?,
        )?;
        let detector = expect_field(name, line_no, parts.next(), "detector")?;
        let detector = DetectorKind::parse(detector)
            .ok_or_else(|| Error::parse(name, line_no, format!("unknown detector `{detector}`")))?;
        let tokens_str = expect_field(name, line_no, parts.next(), "tokens")?;
        let tokens: Vec<TokenId> = tokens_str
            .split_whitespace()
            .map(|t| {
                t.parse()
                    .map_err(|_| Error::parse(name, line_no, format!("bad token id `{t}`")))
            })
            .collect::<Result<_>>()?;
        let words_str = expect_field(name, line_no, parts.next(), "words")?;
        let words: Vec<String> = words_str.split_whitespace().map(|w| w.to_string()).collect();
        if parts.next().is_some() {
            return Err(Error::parse(name, line_no, "trailing fields on commit record"));
        }

        let result = entry(&mut order, &mut sessions, &utt);
        if let Some(last) = result.commits.last() {
            if audio + 1e-9 < last.audio_consumed_ms {
                return Err(Error::parse(
                    name,
                    line_no,
                    format!(
                        "audio_consumed_ms not monotone ({audio} after {})",
                        last.audio_consumed_ms
                    ),
                ));
            }
            if wall + 1e-9 < last.commit_wall_ms {
                return Err(Error::parse(
                    name,
                    line_no,
                    format!("commit_wall_ms not monotone ({wall} after {})", last.commit_wall_ms),
                ));
            }
        }
        let step_index = result.steps.len().saturating_sub(1);
        result.final_tokens.extend_from_slice(&tokens);
        result.final_words.extend(words.iter().cloned());
        result.commits.push(CommitRecord {
            tokens,
            words,
            commit_wall_ms: wall,
            audio_consumed_ms: audio,
            detector,
            step_index,
        });
    }

    Ok(order
        .into_iter()
        .map(|utt| {
            let result = sessions.remove(&utt).unwrap();
            LoggedSession { utt, result }
        })
        .collect())
}

/// Reconstruct a single-session result from its serialized log.
pub fn replay_log(name: &str, text: &str) -> Result<SessionResult> {
    let mut sessions = parse_log(name, text)?;
    match sessions.len() {
        0 => Ok(SessionResult::default()),
        1 => Ok(sessions.remove(0).result),
        n => Err(Error::parse(
            name,
            1,
            format!("expected a single-session log, found {n} utterances"),
        )),
    }
}
