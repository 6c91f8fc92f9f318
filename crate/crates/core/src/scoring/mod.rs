//! Pluggable next-token scorers.
//!
//! A [`Scorer`] stands in for a trained sequence-to-sequence model: given the
//! accumulated feature frames and a token prefix it returns a normalized
//! next-token distribution plus attention weights over the frames. Multiple
//! scorers combine through [`ensemble_combine`].

mod spec;
mod synthetic;

pub use spec::{build_scorer, corrupt_scorer, format_scorer_spec, parse_scorer_spec, ScorerSpec};
pub use synthetic::{build_synthetic_scorer, SyntheticScorer, FRAMES_PER_TOKEN};

use crate::error::{Error, Result};
use crate::features::FeatureStream;
use crate::hyp::TokenId;
use std::sync::Arc;

/// Hard cap on the prefix length any scorer accepts.
pub const MAX_PREFIX_TOKENS: usize = 4096;

/// Output of one scoring step: log probabilities over the vocabulary and
/// attention weights over the frames available so far.
#[derive(Debug, Clone, PartialEq)]
pub struct StepScore {
    pub log_probs: Vec<f64>,
    pub attention: Vec<f64>,
}

impl StepScore {
    /// Check the normalization contracts: logsumexp(log_probs) = 0 +- 1e-6
    /// and attention non-negative summing to 1 +- 1e-6.
    pub fn validate(&self) -> Result<()> {
        let lse = logsumexp(&self.log_probs);
        if lse.abs() > 1e-6 {
            return Err(Error::InvalidConfig(format!(
                "log_probs not normalized (logsumexp = {lse})"
            )));
        }
        if self.attention.iter().any(|&w| w < 0.0 || !w.is_finite()) {
            return Err(Error::InvalidConfig(
                "attention weights must be finite and non-negative".into(),
            ));
        }
        let sum: f64 = self.attention.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(Error::UnnormalizedAttention { sum });
        }
        Ok(())
    }
}

pub fn logsumexp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let sum: f64 = xs.iter().map(|&x| (x - max).exp()).sum();
    max + sum.ln()
}

pub fn log_softmax_in_place(xs: &mut [f64]) {
    let lse = logsumexp(xs);
    for x in xs.iter_mut() {
        *x -= lse;
    }
}

/// A next-token scorer. Implementations are read-only after construction and
/// shareable across concurrent sessions.
pub trait Scorer: Send + Sync {
    fn vocab_size(&self) -> usize;
    fn eos_id(&self) -> TokenId;
    fn feature_dim(&self) -> usize;

    /// Score the next token after `prefix` given the frames received so far.
    /// Deterministic for fixed inputs; `prefix` must not contain eos.
    fn score_step(&self, features: &FeatureStream, prefix: &[TokenId]) -> Result<StepScore>;

    /// Whether this scorer's attention output is meant for endpoint
    /// estimation. Ensembles may designate a single member, or none.
    fn provides_endpoint_attention(&self) -> bool {
        true
    }
}

/// Combine member step scores: the weighted arithmetic mean of the log
/// probabilities, renormalized, and the weighted mean of the attentions,
/// renormalized to sum 1. A single member with weight 1 passes through
/// unchanged.
pub fn ensemble_combine(scores: &[StepScore], weights: &[f64]) -> Result<StepScore> {
    if scores.is_empty() {
        return Err(Error::EmptyInput("ensemble scores"));
    }
    if scores.len() != weights.len() {
        return Err(Error::InvalidConfig(format!(
            "{} scores but {} weights",
            scores.len(),
            weights.len()
        )));
    }
    if weights.iter().any(|&w| w < 0.0 || !w.is_finite()) {
        return Err(Error::InvalidConfig("ensemble weights must be non-negative".into()));
    }
    let wsum: f64 = weights.iter().sum();
    if (wsum - 1.0).abs() > 1e-6 {
        return Err(Error::InvalidConfig(format!(
            "ensemble weights must sum to 1, got {wsum}"
        )));
    }
    let len = scores[0].log_probs.len();
    for s in scores {
        if s.log_probs.len() != len {
            return Err(Error::DimensionMismatch {
                expected: len,
                got: s.log_probs.len(),
            });
        }
    }
    if scores.len() == 1 && weights[0] == 1.0 {
        return Ok(scores[0].clone());
    }

    let mut log_probs = vec![0.0f64; len];
    for (s, &w) in scores.iter().zip(weights) {
        for (acc, &lp) in log_probs.iter_mut().zip(&s.log_probs) {
            *acc += w * lp;
        }
    }
    log_softmax_in_place(&mut log_probs);

    let att_len = scores.iter().map(|s| s.attention.len()).max().unwrap_or(0);
    let mut attention = vec![0.0f64; att_len];
    for (s, &w) in scores.iter().zip(weights) {
        for (acc, &a) in attention.iter_mut().zip(&s.attention) {
            *acc += w * a;
        }
    }
    let asum: f64 = attention.iter().sum();
    if asum > 0.0 {
        for a in attention.iter_mut() {
            *a /= asum;
        }
    }

    Ok(StepScore { log_probs, attention })
}

/// Where an ensemble takes its reported attention from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttentionSource {
    /// Use one designated member's attention (the usual endpointing setup).
    Member(usize),
    /// Use the weight-averaged attention of all members.
    Average,
    /// Report averaged attention but declare it unsuitable for endpointing.
    None,
}

/// Uniform or weighted combination of several scorers.
pub struct EnsembleScorer {
    members: Vec<Arc<dyn Scorer>>,
    weights: Vec<f64>,
    attention_source: AttentionSource,
}

impl EnsembleScorer {
    pub fn new(
        members: Vec<Arc<dyn Scorer>>,
        weights: Vec<f64>,
        attention_source: AttentionSource,
    ) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::EmptyInput("ensemble members"));
        }
        if members.len() != weights.len() {
            return Err(Error::InvalidConfig(format!(
                "{} members but {} weights",
                members.len(),
                weights.len()
            )));
        }
        let wsum: f64 = weights.iter().sum();
        if weights.iter().any(|&w| w < 0.0) || (wsum - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidConfig(
                "ensemble weights must be non-negative and sum to 1".into(),
            ));
        }
        let (v, e, d) = (
            members[0].vocab_size(),
            members[0].eos_id(),
            members[0].feature_dim(),
        );
        for m in &members[1..] {
            if m.vocab_size() != v || m.eos_id() != e || m.feature_dim() != d {
                return Err(Error::InvalidConfig(
                    "ensemble members disagree on vocabulary or feature dim".into(),
                ));
            }
        }
        if let AttentionSource::Member(i) = attention_source {
            if i >= members.len() {
                return Err(Error::InvalidConfig(format!(
                    "attention source member {i} out of range"
                )));
            }
        }
        Ok(Self {
            members,
            weights,
            attention_source,
        })
    }

    /// Equal weights, attention read from member 0.
    pub fn uniform(members: Vec<Arc<dyn Scorer>>) -> Result<Self> {
        let n = members.len();
        if n == 0 {
            return Err(Error::EmptyInput("ensemble members"));
        }
        let weights = vec![1.0 / n as f64; n];
        Self::new(members, weights, AttentionSource::Member(0))
    }
}

impl Scorer for EnsembleScorer {
    fn vocab_size(&self) -> usize {
        self.members[0].vocab_size()
    }

    fn eos_id(&self) -> TokenId {
        self.members[0].eos_id()
    }

    fn feature_dim(&self) -> usize {
        self.members[0].feature_dim()
    }

    fn score_step(&self, features: &FeatureStream, prefix: &[TokenId]) -> Result<StepScore> {
        let member_scores: Vec<StepScore> = self
            .members
            .iter()
            .map(|m| m.score_step(features, prefix))
            .collect::<Result<_>>()?;
        let mut combined = ensemble_combine(&member_scores, &self.weights)?;
        if let AttentionSource::Member(i) = self.attention_source {
            combined.attention = member_scores[i].attention.clone();
        }
        Ok(combined)
    }

    fn provides_endpoint_attention(&self) -> bool {
        !matches!(self.attention_source, AttentionSource::None)
    }
}
