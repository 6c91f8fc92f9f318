//! Hypotheses and beams.

use std::cmp::Ordering;
use std::sync::Arc;

pub type TokenId = u32;

/// A scored candidate token sequence. Each token carries the attention
/// weights (over the frames available when it was scored) that produced it.
#[derive(Debug, Clone)]
pub struct Hypothesis {
    pub tokens: Vec<TokenId>,
    /// Sum of per-token log probabilities.
    pub log_score: f64,
    pub attention: Vec<Arc<[f64]>>,
    pub finished: bool,
}

impl Hypothesis {
    pub fn root() -> Self {
        Self {
            tokens: Vec::new(),
            log_score: 0.0,
            attention: Vec::new(),
            finished: false,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Ranking score: raw sum, or per-token mean under length normalization.
    pub fn ranking_score(&self, length_norm: bool) -> f64 {
        if length_norm && !self.tokens.is_empty() {
            self.log_score / self.tokens.len() as f64
        } else {
            self.log_score
        }
    }
}

/// Score-descending order with a deterministic tie-break: equal scores are
/// resolved by lexicographic comparison of the token-id sequences.
pub fn cmp_hypotheses(a: &Hypothesis, b: &Hypothesis, length_norm: bool) -> Ordering {
    let sa = a.ranking_score(length_norm);
    let sb = b.ranking_score(length_norm);
    match sb.partial_cmp(&sa) {
        Some(Ordering::Equal) | None => a.tokens.cmp(&b.tokens),
        Some(ord) => ord,
    }
}

/// The active hypotheses extending a committed stable prefix, kept in
/// score-descending order.
#[derive(Debug, Clone)]
pub struct Beam {
    pub hypotheses: Vec<Hypothesis>,
    pub committed_prefix: Vec<TokenId>,
}

impl Beam {
    /// A beam holding only the committed prefix itself (as a seed hypothesis).
    pub fn seeded(seed: Hypothesis, committed_prefix: Vec<TokenId>) -> Self {
        debug_assert!(seed.tokens.starts_with(&committed_prefix));
        Self {
            hypotheses: vec![seed],
            committed_prefix,
        }
    }

    pub fn best(&self) -> Option<&Hypothesis> {
        self.hypotheses.first()
    }

    pub fn is_empty(&self) -> bool {
        self.hypotheses.is_empty()
    }

    /// Drop hypotheses that do not extend the (newly grown) committed prefix.
    pub fn retain_extending(&mut self, committed: &[TokenId]) {
        self.hypotheses
            .retain(|h| h.tokens.starts_with(committed));
        self.committed_prefix = committed.to_vec();
    }
}
