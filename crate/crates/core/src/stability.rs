//! Stability detection: decide which beam prefix is safe to commit.
//!
//! Two conditions are implemented, plus their logical-OR combination:
//!
//! * shared prefix — every active hypothesis in the beam starts with the
//!   same tokens, so the beam cannot change its mind about them;
//! * reliable endpoint — the best-ranked hypothesis's prefix has an
//!   estimated audio endpoint that lies at least `delta_threshold_ms` behind
//!   the end of the received audio, i.e. enough later evidence arrived
//!   without dethroning it.
//!
//! Endpoints come from cumulative attention mass: the endpoint of a token is
//! the earliest frame by which its attention mass reaches the configured
//! threshold (0.95 by default).

use crate::error::{Error, Result};
use crate::hyp::{Beam, Hypothesis, TokenId};
use crate::vocab::Vocabulary;
use std::sync::Arc;

/// Which rule certified a commit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetectorKind {
    SharedPrefix,
    ReliableEndpoint,
    Flush,
}

impl DetectorKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            DetectorKind::SharedPrefix => "SharedPrefix",
            DetectorKind::ReliableEndpoint => "ReliableEndpoint",
            DetectorKind::Flush => "Flush",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "SharedPrefix" => Some(DetectorKind::SharedPrefix),
            "ReliableEndpoint" => Some(DetectorKind::ReliableEndpoint),
            "Flush" => Some(DetectorKind::Flush),
            _ => None,
        }
    }
}

/// Endpoint of one token of a hypothesis prefix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EndpointEstimate {
    /// Prefix length (in tokens) this endpoint belongs to.
    pub prefix_len: usize,
    /// Earliest frame index with cumulative attention mass >= threshold.
    pub t_c: usize,
    /// Stream end minus endpoint time, in milliseconds.
    pub delta_ms: f64,
}

/// Earliest index at which the cumulative weight mass reaches `threshold`.
/// Falls back to the last index if rounding keeps the total just below the
/// threshold (only reachable for thresholds at 1.0).
pub fn endpoint_frame(weights: &[f64], threshold: f64) -> Result<usize> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "attention mass threshold must lie in (0, 1], got {threshold}"
        )));
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > 1e-3 {
        return Err(Error::UnnormalizedAttention { sum });
    }
    let mut acc = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        acc += w;
        if acc >= threshold {
            return Ok(i);
        }
    }
    Ok(weights.len() - 1)
}

/// Endpoint of the token at `token_index` within per-token attention.
pub fn estimate_endpoint(
    attention: &[Arc<[f64]>],
    token_index: usize,
    threshold: f64,
) -> Result<usize> {
    let weights = attention.get(token_index).ok_or(Error::InvalidConfig(format!(
        "token index {token_index} out of range for {} attention vectors",
        attention.len()
    )))?;
    endpoint_frame(weights, threshold)
}

/// Longest common prefix of all hypotheses, minus the already committed
/// prefix. Empty when the beam disagrees on the first uncommitted token.
pub fn shared_prefix(beam: &Beam) -> Vec<TokenId> {
    let Some(first) = beam.hypotheses.first() else {
        return Vec::new();
    };
    let mut lcp = first.tokens.len();
    for h in &beam.hypotheses[1..] {
        let mut i = 0;
        let cap = lcp.min(h.tokens.len());
        while i < cap && h.tokens[i] == first.tokens[i] {
            i += 1;
        }
        lcp = i;
        if lcp == 0 {
            break;
        }
    }
    let committed = beam.committed_prefix.len();
    if lcp <= committed {
        return Vec::new();
    }
    first.tokens[committed..lcp].to_vec()
}

/// Per-token endpoint estimates for the uncommitted part of a hypothesis.
pub fn endpoint_estimates(
    hyp: &Hypothesis,
    committed_len: usize,
    audio_end_ms: f64,
    frame_period_ms: f64,
    threshold: f64,
) -> Result<Vec<EndpointEstimate>> {
    let mut out = Vec::new();
    for i in committed_len..hyp.tokens.len() {
        let t_c = estimate_endpoint(&hyp.attention, i, threshold)?;
        // Endpoint time convention: end of frame t_c, so delta is 0 when the
        // mass lands exactly on the final received frame.
        let endpoint_ms = (t_c + 1) as f64 * frame_period_ms;
        out.push(EndpointEstimate {
            prefix_len: i + 1,
            t_c,
            delta_ms: audio_end_ms - endpoint_ms,
        });
    }
    Ok(out)
}

/// Is the word ending at token position `i` complete within this hypothesis?
/// It is when the next token starts a new word, is eos, or the hypothesis is
/// finished at `i`.
fn word_complete_at(hyp: &Hypothesis, i: usize, vocab: &Vocabulary) -> bool {
    if hyp.tokens[i] == vocab.eos_id() {
        return true;
    }
    match hyp.tokens.get(i + 1) {
        Some(&next) => next == vocab.eos_id() || vocab.is_word_initial(next),
        None => hyp.finished,
    }
}

/// Longest prefix of the best hypothesis (beyond the committed prefix) whose
/// last token's endpoint satisfies `delta >= delta_threshold_ms`, truncated
/// so the commit ends on a complete word.
pub fn reliable_prefix(
    best: &Hypothesis,
    committed_len: usize,
    audio_end_ms: f64,
    frame_period_ms: f64,
    delta_threshold_ms: f64,
    attention_threshold: f64,
    vocab: &Vocabulary,
) -> Result<Vec<TokenId>> {
    let estimates = endpoint_estimates(
        best,
        committed_len,
        audio_end_ms,
        frame_period_ms,
        attention_threshold,
    )?;
    let mut qualifying: Option<usize> = None;
    for (offset, est) in estimates.iter().enumerate() {
        if est.delta_ms >= delta_threshold_ms {
            qualifying = Some(committed_len + offset);
        }
    }
    let Some(limit) = qualifying else {
        return Ok(Vec::new());
    };
    // Walk back to the last complete word at or before the qualifying token.
    let mut end = None;
    for i in (committed_len..=limit).rev() {
        if word_complete_at(best, i, vocab) {
            end = Some(i);
            break;
        }
    }
    match end {
        Some(i) => Ok(best.tokens[committed_len..=i].to_vec()),
        None => Ok(Vec::new()),
    }
}

/// Everything detection needs besides the beam itself.
pub struct DetectContext<'a> {
    pub audio_end_ms: f64,
    pub frame_period_ms: f64,
    pub delta_threshold_ms: f64,
    pub attention_mass_threshold: f64,
    pub vocab: &'a Vocabulary,
}

/// Run the configured stability condition(s) and return the newly stable
/// extension (possibly empty) plus which detector certified it. The combined
/// mode is a logical OR: stability is declared as soon as either condition
/// certifies it, so the longer result wins; ties report `SharedPrefix`.
pub fn detect(
    beam: &Beam,
    mode: crate::config::DetectorMode,
    ctx: &DetectContext,
) -> Result<(Vec<TokenId>, DetectorKind)> {
    use crate::config::DetectorMode::*;
    if beam.is_empty() {
        return Err(Error::EmptyBeam);
    }
    let shared = || shared_prefix(beam);
    let endpoint = || -> Result<Vec<TokenId>> {
        let best = beam.best().ok_or(Error::EmptyBeam)?;
        reliable_prefix(
            best,
            beam.committed_prefix.len(),
            ctx.audio_end_ms,
            ctx.frame_period_ms,
            ctx.delta_threshold_ms,
            ctx.attention_mass_threshold,
            ctx.vocab,
        )
    };
    match mode {
        SharedOnly => Ok((shared(), DetectorKind::SharedPrefix)),
        EndpointOnly => Ok((endpoint()?, DetectorKind::ReliableEndpoint)),
        Combined => {
            let s = shared();
            let e = endpoint()?;
            if e.len() > s.len() {
                Ok((e, DetectorKind::ReliableEndpoint))
            } else {
                Ok((s, DetectorKind::SharedPrefix))
            }
        }
    }
}
