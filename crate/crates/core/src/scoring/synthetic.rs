//! Deterministic synthetic scorer.
//!
//! The scorer reads a planted token sequence straight out of the feature
//! frames: the stream is laid out in fixed-size segments of
//! [`FRAMES_PER_TOKEN`] frames, and `values[0]` of a segment's first frame
//! encodes the token id preferred at that output position. Scoring the token
//! at position `k` only ever looks at frames up to the endpoint
//! `E(k) = (k + 1) * FRAMES_PER_TOKEN - 1`, and the emitted attention puts
//! all mass on the last three frames before that endpoint. Two properties
//! follow by construction and are what the tests lean on:
//!
//! * prefix-consistency: the output for a prefix is bit-identical whether
//!   the stream is truncated at `E(prefix)` or runs longer, so incremental
//!   and offline decoding agree exactly;
//! * the planted sequence is the unique argmax: the preferred token gets a
//!   fixed logit bonus, prefixes that contradict the frames lose it, and the
//!   remaining logits are seed-keyed dither in [0, 1).
//!
//! An optional noise stage perturbs the log probabilities (never the
//! attention): a seed-keyed quasi-Gaussian term jitters every logit, and the
//! preferred token is deterministically reassigned on a noise-level-sized
//! fraction of steps. Raising the level plants more recognition errors, so
//! the planted sequence's rank degrades smoothly.

use super::{Scorer, StepScore, MAX_PREFIX_TOKENS};
use crate::error::{Error, Result};
use crate::features::FeatureStream;
use crate::hyp::TokenId;
use crate::vocab::Vocabulary;

/// Frames of audio the endpoint function advances per output token.
pub const FRAMES_PER_TOKEN: usize = 8;

// The margins balance three needs. The preferred-token bonus keeps the
// per-step probability tax of the planted path near (V-1)*e^-7, so even a
// ~250-token sequence loses less total mass than one off-preference step
// costs and early eos can never outrank the planted path. One mismatch
// drops the bonus to 3: still dominant, so a forced wrong commit recovers,
// but enough of a handicap that derailed beam alternates fade within a few
// tokens. Two mismatches remove the bonus entirely.
const MATCH_BONUS: f64 = 7.0;
const MISMATCH_PENALTY: f64 = 4.0;
const NOISE_SPAN: f64 = 3.0;
// At full noise, the preferred token is reassigned on ~8% of steps.
const NOISE_SWAP_RATE: f64 = 0.08;

#[derive(Debug, Clone)]
pub struct SyntheticScorer {
    seed: u64,
    vocab_size: usize,
    eos_id: TokenId,
    /// Which token ids open a new word; noise swaps stay within a role.
    word_initial: Vec<bool>,
    dim: usize,
    noise_level: f64,
    noise_seed: u64,
}

pub fn build_synthetic_scorer(seed: u64, vocab: &Vocabulary, dim: usize) -> Result<SyntheticScorer> {
    if vocab.size() < 2 {
        return Err(Error::InvalidConfig(
            "synthetic scorer needs a vocabulary of at least 2 tokens".into(),
        ));
    }
    if dim == 0 {
        return Err(Error::InvalidConfig("feature dim must be positive".into()));
    }
    Ok(SyntheticScorer {
        seed,
        vocab_size: vocab.size(),
        eos_id: vocab.eos_id(),
        word_initial: (0..vocab.size() as TokenId)
            .map(|t| vocab.is_word_initial(t))
            .collect(),
        dim,
        noise_level: 0.0,
        noise_seed: 0,
    })
}

impl SyntheticScorer {
    /// Highest frame index consulted when scoring the token at position
    /// `prefix_len`. Strictly increasing in the prefix length.
    pub fn endpoint_frame_for(prefix_len: usize) -> usize {
        (prefix_len + 1) * FRAMES_PER_TOKEN - 1
    }

    pub fn with_noise(mut self, noise_level: f64, noise_seed: u64) -> Self {
        self.noise_level = noise_level;
        self.noise_seed = noise_seed;
        self
    }

    pub fn noise_level(&self) -> f64 {
        self.noise_level
    }

    /// Token id encoded at output position `k`, if the covering frame is
    /// within the visible window.
    fn decoded_token(&self, features: &FeatureStream, k: usize, visible: usize) -> Option<TokenId> {
        let frame = k * FRAMES_PER_TOKEN;
        if frame >= visible {
            return None;
        }
        let raw = features.frames()[frame].values[0];
        let id = raw.round().max(0.0) as usize;
        Some(id.min(self.vocab_size - 1) as TokenId)
    }

    /// The token this (possibly noisy) scorer believes in at step `k`: the
    /// frame-encoded token, deterministically reassigned on a
    /// noise-level-sized fraction of steps. The whole preferred chain shifts
    /// consistently, so a reassignment is a genuine, permanent recognition
    /// error rather than a transient score wobble. Swaps preserve the
    /// token's word-structural role (word-initial stays word-initial) and
    /// never touch eos steps: substitution errors only, which keeps word
    /// counts stable for alignment-based metrics.
    fn preferred_token(&self, encoded: TokenId, k: usize, prefix_hash: u64) -> TokenId {
        if self.noise_level <= 0.0 || encoded == self.eos_id {
            return encoded;
        }
        let draw = hash01(self.noise_seed ^ 0x1f3d_5b79_9e24_c68a, k as u64, prefix_hash, 1);
        if draw >= self.noise_level * NOISE_SWAP_RATE {
            return encoded;
        }
        let v = self.vocab_size as u64;
        let role = self.word_initial[encoded as usize];
        let mut candidate = (hash01(self.noise_seed ^ 0x8c5a_2e71_d90b_3f46, k as u64, prefix_hash, 2)
            * v as f64) as u64 % v;
        for _ in 0..v {
            let c = candidate as TokenId;
            if c != encoded && c != self.eos_id && self.word_initial[c as usize] == role {
                return c;
            }
            candidate = (candidate + 1) % v;
        }
        encoded
    }
}

impl Scorer for SyntheticScorer {
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn eos_id(&self) -> TokenId {
        self.eos_id
    }

    fn feature_dim(&self) -> usize {
        self.dim
    }

    fn score_step(&self, features: &FeatureStream, prefix: &[TokenId]) -> Result<StepScore> {
        if features.is_empty() {
            return Err(Error::EmptyInput("features"));
        }
        if features.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: features.dim(),
            });
        }
        if prefix.len() >= MAX_PREFIX_TOKENS {
            return Err(Error::PrefixTooLong {
                len: prefix.len(),
                max: MAX_PREFIX_TOKENS,
            });
        }
        if prefix.contains(&self.eos_id) {
            return Err(Error::InvalidConfig("prefix contains eos".into()));
        }

        let k = prefix.len();
        // Frames visible at this step; never beyond the endpoint budget.
        let visible = features.len().min(Self::endpoint_frame_for(k) + 1);

        // How far the prefix contradicts what the frames encode. Each
        // contradiction shrinks the preferred-token bonus; two or more
        // remove it entirely, so derailed continuations fade out of the beam
        // while a single forced error stays recoverable.
        let mut prefix_hash = splitmix64(self.seed ^ 0x73c9_5d1b_a7f0_4e11);
        let mut mismatches = 0usize;
        for (j, &tok) in prefix.iter().enumerate() {
            let encoded = self.decoded_token(features, j, visible).unwrap_or(self.eos_id);
            let expected = self.preferred_token(encoded, j, prefix_hash);
            if tok != expected {
                mismatches += 1;
            }
            prefix_hash = splitmix64(prefix_hash ^ (tok as u64 + 1));
        }
        let encoded = self
            .decoded_token(features, k, visible)
            .unwrap_or(self.eos_id);
        let preferred = self.preferred_token(encoded, k, prefix_hash);
        let bonus = MATCH_BONUS - MISMATCH_PENALTY * mismatches.min(2) as f64;

        let mut logits = Vec::with_capacity(self.vocab_size);
        for v in 0..self.vocab_size {
            let mut logit = hash01(self.seed, k as u64, prefix_hash, v as u64);
            if v as TokenId == preferred {
                logit += bonus;
            }
            if self.noise_level > 0.0 {
                logit += self.noise_level
                    * NOISE_SPAN
                    * quasi_gaussian(self.noise_seed, k as u64, prefix_hash, v as u64);
            }
            logits.push(logit);
        }
        super::log_softmax_in_place(&mut logits);

        // Attention concentrated on the last three visible frames, so the
        // 0.95-mass endpoint lands exactly on the endpoint budget (or the
        // last received frame when the stream is still shorter).
        let mut attention = vec![0.0f64; visible];
        let last = visible - 1;
        match visible {
            1 => attention[0] = 1.0,
            2 => {
                attention[0] = 0.3;
                attention[1] = 0.7;
            }
            _ => {
                attention[last - 2] = 0.2;
                attention[last - 1] = 0.3;
                attention[last] = 0.5;
            }
        }

        Ok(StepScore {
            log_probs: logits,
            attention,
        })
    }
}

// ── Seed-keyed hashing ──────────────────────────────────────────────────────

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Uniform in [0, 1), keyed on (seed, step, prefix, token).
fn hash01(seed: u64, step: u64, prefix_hash: u64, token: u64) -> f64 {
    let h = splitmix64(
        splitmix64(seed ^ splitmix64(step ^ 0xa076_1d64_78bd_642f)) ^ prefix_hash ^ splitmix64(token),
    );
    (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Sum of four uniforms shifted to [-2, 2]; smooth, light-tailed noise.
fn quasi_gaussian(seed: u64, step: u64, prefix_hash: u64, token: u64) -> f64 {
    let mut acc = 0.0;
    for i in 0..4u64 {
        acc += hash01(seed ^ splitmix64(i + 0x5bf0_3635), step, prefix_hash, token);
    }
    acc - 2.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vocab::Vocabulary;

    fn test_vocab(n: usize) -> Vocabulary {
        let mut tokens = vec!["<eos>".to_string()];
        for i in 1..n {
            tokens.push(format!("\u{2581}t{i}"));
        }
        Vocabulary::new(tokens, "\u{2581}", 0).unwrap()
    }

    /// Frames encoding `tokens` one segment per token, plus a tail of
    /// eos-valued segments.
    fn encode(tokens: &[TokenId], dim: usize, tail: usize) -> FeatureStream {
        let total = (tokens.len() + 1) * FRAMES_PER_TOKEN + tail;
        let mut rows = Vec::with_capacity(total);
        for i in 0..total {
            let seg = i / FRAMES_PER_TOKEN;
            let tok = tokens.get(seg).copied().unwrap_or(0);
            let mut row = vec![tok as f64];
            row.resize(dim, 0.25);
            rows.push(row);
        }
        FeatureStream::from_rows(dim, 10.0, rows).unwrap()
    }

    #[test]
    fn output_is_normalized() {
        let vocab = test_vocab(6);
        let scorer = build_synthetic_scorer(3, &vocab, 2).unwrap();
        let stream = encode(&[1, 2], 2, 4);
        let s = scorer.score_step(&stream, &[1]).unwrap();
        s.validate().unwrap();
        assert_eq!(s.log_probs.len(), 6);
    }

    #[test]
    fn determinism_bit_exact() {
        let vocab = test_vocab(5);
        let a = build_synthetic_scorer(7, &vocab, 3).unwrap();
        let b = build_synthetic_scorer(7, &vocab, 3).unwrap();
        let stream = encode(&[2, 4, 1], 3, 5);
        let x = a.score_step(&stream, &[2, 4]).unwrap();
        let y = b.score_step(&stream, &[2, 4]).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn prefix_consistency_bit_exact() {
        let vocab = test_vocab(5);
        let scorer = build_synthetic_scorer(11, &vocab, 2).unwrap();
        let stream = encode(&[1, 3, 2, 4], 2, 9);
        for prefix in [&[][..], &[1][..], &[1, 3][..], &[1, 3, 2][..]] {
            let cutoff = SyntheticScorer::endpoint_frame_for(prefix.len()) + 1;
            let truncated = stream.prefix(cutoff);
            let full = scorer.score_step(&stream, prefix).unwrap();
            let short = scorer.score_step(&truncated, prefix).unwrap();
            assert_eq!(full, short, "prefix {prefix:?}");
        }
    }

    #[test]
    fn attention_endpoint_matches_budget() {
        let vocab = test_vocab(5);
        let scorer = build_synthetic_scorer(11, &vocab, 2).unwrap();
        let stream = encode(&[1, 3, 2], 2, 6);
        let s = scorer.score_step(&stream, &[1]).unwrap();
        // mass beyond the endpoint budget is zero
        let budget = SyntheticScorer::endpoint_frame_for(1);
        assert_eq!(s.attention.len(), budget + 1);
        // cumulative mass crosses 0.95 exactly at the budget frame
        let mut acc = 0.0;
        let mut t_c = 0;
        for (i, w) in s.attention.iter().enumerate() {
            acc += w;
            if acc >= 0.95 {
                t_c = i;
                break;
            }
        }
        assert_eq!(t_c, budget);
    }

    #[test]
    fn planted_token_is_argmax_at_zero_noise() {
        let vocab = test_vocab(5);
        let scorer = build_synthetic_scorer(42, &vocab, 2).unwrap();
        let planted: Vec<TokenId> = vec![3, 1, 4, 2];
        let stream = encode(&planted, 2, 7);
        let mut prefix: Vec<TokenId> = Vec::new();
        for &tok in &planted {
            let s = scorer.score_step(&stream, &prefix).unwrap();
            let argmax = s
                .log_probs
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0;
            assert_eq!(argmax as TokenId, tok);
            prefix.push(tok);
        }
        // after the planted tokens the scorer wants eos
        let s = scorer.score_step(&stream, &prefix).unwrap();
        let argmax = s
            .log_probs
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert_eq!(argmax as TokenId, 0);
    }

    #[test]
    fn noise_zero_is_identity() {
        let vocab = test_vocab(5);
        let base = build_synthetic_scorer(9, &vocab, 2).unwrap();
        let noisy = base.clone().with_noise(0.0, 123);
        let stream = encode(&[1, 2], 2, 3);
        // noise_level 0 takes the exact same code path
        assert_eq!(
            base.score_step(&stream, &[1]).unwrap(),
            noisy.score_step(&stream, &[1]).unwrap()
        );
    }

    #[test]
    fn noise_is_deterministic_per_seed() {
        let vocab = test_vocab(5);
        let a = build_synthetic_scorer(9, &vocab, 2).unwrap().with_noise(0.8, 55);
        let b = build_synthetic_scorer(9, &vocab, 2).unwrap().with_noise(0.8, 55);
        let c = build_synthetic_scorer(9, &vocab, 2).unwrap().with_noise(0.8, 56);
        let stream = encode(&[1, 2], 2, 3);
        assert_eq!(
            a.score_step(&stream, &[]).unwrap(),
            b.score_step(&stream, &[]).unwrap()
        );
        assert_ne!(
            a.score_step(&stream, &[]).unwrap().log_probs,
            c.score_step(&stream, &[]).unwrap().log_probs
        );
    }

    #[test]
    fn noise_degrades_planted_rank_monotonically() {
        // across noise levels, count the steps where the planted token is
        // still the argmax; higher noise never recovers a degraded step
        // because the swap draws are shared across levels
        let vocab = test_vocab(8);
        let mut matches = Vec::new();
        for &level in &[0.0, 0.25, 0.5, 0.75, 1.0] {
            let mut count = 0usize;
            let mut total = 0usize;
            for seed in 0..30u64 {
                let scorer = build_synthetic_scorer(seed, &vocab, 2)
                    .unwrap()
                    .with_noise(level, 999);
                let planted: Vec<TokenId> =
                    (0..8).map(|i| 1 + ((seed as usize + i) % 7) as TokenId).collect();
                let stream = encode(&planted, 2, 5);
                let mut prefix = Vec::new();
                for &tok in &planted {
                    let s = scorer.score_step(&stream, &prefix).unwrap();
                    let argmax = s
                        .log_probs
                        .iter()
                        .enumerate()
                        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                        .unwrap()
                        .0 as TokenId;
                    if argmax == tok {
                        count += 1;
                    }
                    total += 1;
                    prefix.push(tok);
                }
            }
            matches.push((level, count, total));
        }
        assert_eq!(matches[0].1, matches[0].2); // level 0: every step matches
        for w in matches.windows(2) {
            assert!(
                w[1].1 <= w[0].1,
                "argmax matches rose from {:?} to {:?}",
                w[0],
                w[1]
            );
        }
        assert!(matches.last().unwrap().1 < matches[0].1); // full noise bites
    }

    #[test]
    fn error_paths() {
        let vocab = test_vocab(5);
        let scorer = build_synthetic_scorer(1, &vocab, 2).unwrap();
        let stream = encode(&[1], 2, 2);
        // dimension mismatch
        let wrong = encode(&[1], 3, 2);
        assert!(matches!(
            scorer.score_step(&wrong, &[]),
            Err(Error::DimensionMismatch { .. })
        ));
        // empty features
        let empty = FeatureStream::new(2, 10.0).unwrap();
        assert!(scorer.score_step(&empty, &[]).is_err());
        // oversized prefix
        let long = vec![1u32; MAX_PREFIX_TOKENS];
        assert!(matches!(
            scorer.score_step(&stream, &long),
            Err(Error::PrefixTooLong { .. })
        ));
        // tiny vocab rejected at build time
        let one = Vocabulary::new(vec!["<eos>".into()], "\u{2581}", 0).unwrap();
        assert!(build_synthetic_scorer(1, &one, 2).is_err());
        assert!(build_synthetic_scorer(1, &vocab, 0).is_err());
    }
}
