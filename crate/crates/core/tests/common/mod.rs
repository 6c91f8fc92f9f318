//! Shared helpers for the integration suites: corpus construction shortcuts
//! and independent oracles (exhaustive search, naive latency loop, a second
//! edit-distance implementation). The oracles deliberately avoid the library
//! code paths they are used to check.

use std::sync::Arc;

use streamdec::features::FeatureStream;
use streamdec::scoring::Scorer;
use streamdec::synthesis::{generate_corpus, make_vocab, Corpus};
use streamdec::{TokenId, Vocabulary};

pub fn corpus(seed: u64, n_utts: usize, vocab_size: usize, words: (usize, usize)) -> Corpus {
    let vocab = Arc::new(make_vocab(vocab_size).unwrap());
    generate_corpus(seed, n_utts, &vocab, words, 4).unwrap()
}

pub fn small_vocab(size: usize) -> Vocabulary {
    make_vocab(size).unwrap()
}

/// Exhaustive argmax over every finished token sequence (non-eos tokens
/// followed by eos) of total length <= max_len. Ties break to the
/// lexicographically smaller sequence, mirroring the beam tie rule.
pub fn exhaustive_best(
    scorer: &dyn Scorer,
    stream: &FeatureStream,
    max_len: usize,
) -> (Vec<TokenId>, f64) {
    let eos = scorer.eos_id();
    let vocab = scorer.vocab_size() as TokenId;
    let mut best_score = f64::NEG_INFINITY;
    let mut best_tokens: Vec<TokenId> = Vec::new();

    fn walk(
        scorer: &dyn Scorer,
        stream: &FeatureStream,
        eos: TokenId,
        vocab: TokenId,
        max_len: usize,
        prefix: &mut Vec<TokenId>,
        score: f64,
        best_score: &mut f64,
        best_tokens: &mut Vec<TokenId>,
    ) {
        let s = scorer.score_step(stream, prefix).unwrap();
        let fin_score = score + s.log_probs[eos as usize];
        let candidate_better = fin_score > *best_score || {
            if fin_score == *best_score {
                let mut fin = prefix.clone();
                fin.push(eos);
                fin < *best_tokens
            } else {
                false
            }
        };
        if candidate_better {
            *best_score = fin_score;
            *best_tokens = prefix.clone();
            best_tokens.push(eos);
        }
        if prefix.len() + 1 < max_len {
            for v in 0..vocab {
                if v == eos {
                    continue;
                }
                prefix.push(v);
                walk(
                    scorer,
                    stream,
                    eos,
                    vocab,
                    max_len,
                    prefix,
                    score + s.log_probs[v as usize],
                    best_score,
                    best_tokens,
                );
                prefix.pop();
            }
        }
    }

    let mut prefix = Vec::new();
    walk(
        scorer,
        stream,
        eos,
        vocab,
        max_len,
        &mut prefix,
        0.0,
        &mut best_score,
        &mut best_tokens,
    );
    (best_tokens, best_score)
}

/// Textbook full-matrix edit distance, written independently of the library
/// implementation (no row recycling).
pub fn reference_edit_distance(a: &[String], b: &[String]) -> usize {
    let n = a.len();
    let m = b.len();
    let mut dp = vec![vec![0usize; m + 1]; n + 1];
    for (i, row) in dp.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=m {
        dp[0][j] = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let sub = dp[i - 1][j - 1] + usize::from(a[i - 1] != b[j - 1]);
            let del = dp[i - 1][j] + 1;
            let ins = dp[i][j - 1] + 1;
            dp[i][j] = sub.min(del).min(ins);
        }
    }
    dp[n][m]
}
