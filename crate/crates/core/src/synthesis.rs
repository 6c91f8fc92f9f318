//! Deterministic synthetic corpora: feature streams with planted token
//! sequences, reference transcripts, exact word alignments, and a matched
//! scorer spec. Everything derives from one seed, so two generations are
//! byte-identical and every downstream measurement is reproducible without
//! external data.
//!
//! The frame layout matches the synthetic scorer: one segment of
//! [`FRAMES_PER_TOKEN`] frames per token (eos included), `values[0]`
//! carrying the planted token id, remaining dimensions filled with seeded
//! jitter. Word alignments fall out of the layout: a word ends exactly at
//! the end of its last sub-token's segment.

use crate::error::{Error, Result};
use crate::features::{format_features, parse_features, FeatureStream};
use crate::hyp::TokenId;
use crate::ioutil::write_atomic;
use crate::metrics::{format_ctm, parse_ctm, WordAlignment};
use crate::scoring::{format_scorer_spec, parse_scorer_spec, ScorerSpec, FRAMES_PER_TOKEN};
use crate::vocab::{format_vocab, parse_vocab, Vocabulary};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

pub const DEFAULT_FRAME_PERIOD_MS: f64 = 10.0;

#[derive(Debug, Clone)]
pub struct Utterance {
    pub id: String,
    pub stream: FeatureStream,
    /// Planted tokens, without the trailing eos.
    pub reference_tokens: Vec<TokenId>,
    pub reference_words: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub utterances: Vec<Utterance>,
    pub alignments: Vec<WordAlignment>,
    pub vocab: Arc<Vocabulary>,
    pub scorer_spec: ScorerSpec,
    pub dim: usize,
    pub frame_period_ms: f64,
    pub seed: u64,
}

const SYLLABLES: [&str; 24] = [
    "ka", "to", "mi", "ra", "su", "ne", "lo", "pi", "da", "fu", "we", "bo", "chi", "ze", "ga",
    "yu", "he", "om", "til", "var", "nok", "sil", "dre", "pov",
];

/// Deterministic vocabulary: eos, then alternating word-initial and
/// continuation syllables.
pub fn make_vocab(size: usize) -> Result<Vocabulary> {
    if size < 3 {
        return Err(Error::InvalidConfig(
            "synthetic vocabulary needs at least 3 tokens (eos + one word + one continuation)".into(),
        ));
    }
    let mut tokens = vec!["<eos>".to_string()];
    for i in 1..size {
        let syl = SYLLABLES[(i - 1) % SYLLABLES.len()];
        let round = (i - 1) / SYLLABLES.len();
        let body = if round == 0 {
            syl.to_string()
        } else {
            format!("{syl}{round}")
        };
        if i % 2 == 1 {
            tokens.push(format!("\u{2581}{body}"));
        } else {
            tokens.push(body);
        }
    }
    Vocabulary::new(tokens, "\u{2581}", 0)
}

pub(crate) fn derive_seed(seed: u64, salt: u64) -> u64 {
    let mut x = seed ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Lay out frames for a token sequence (eos included as the final token):
/// one segment per token, `values[0] = token id`, other dims jittered.
/// Segments past the sequence encode eos.
pub fn encode_stream(
    tokens_with_eos: &[TokenId],
    dim: usize,
    frame_period_ms: f64,
    tail_frames: usize,
    rng: &mut ChaCha8Rng,
) -> Result<FeatureStream> {
    let total = tokens_with_eos.len() * FRAMES_PER_TOKEN + tail_frames;
    let mut stream = FeatureStream::new(dim, frame_period_ms)?;
    for i in 0..total {
        let seg = i / FRAMES_PER_TOKEN;
        let tok = tokens_with_eos.get(seg).copied().unwrap_or(0);
        let mut row = Vec::with_capacity(dim);
        row.push(tok as f64);
        for _ in 1..dim {
            row.push((rng.gen_range(-500..=500i32) as f64) / 1000.0);
        }
        stream.push_row(row)?;
    }
    Ok(stream)
}

/// Generate a corpus of `n_utterances` with planted word sequences of
/// `words_per_utt` words each, plus ground-truth alignments and the matched
/// scorer spec. Deterministic per seed; utterances use derived sub-seeds.
pub fn generate_corpus(
    seed: u64,
    n_utterances: usize,
    vocab: &Arc<Vocabulary>,
    words_per_utt: (usize, usize),
    dim: usize,
) -> Result<Corpus> {
    if n_utterances == 0 {
        return Err(Error::InvalidConfig("n_utterances must be >= 1".into()));
    }
    let (min_words, max_words) = words_per_utt;
    if min_words == 0 || max_words < min_words {
        return Err(Error::InvalidConfig(format!(
            "invalid words_per_utt range {min_words}..={max_words}"
        )));
    }
    let initials: Vec<TokenId> = (0..vocab.size() as TokenId)
        .filter(|&t| t != vocab.eos_id() && vocab.is_word_initial(t))
        .collect();
    let continuations: Vec<TokenId> = (0..vocab.size() as TokenId)
        .filter(|&t| t != vocab.eos_id() && !vocab.is_word_initial(t))
        .collect();
    if initials.is_empty() {
        return Err(Error::InvalidConfig(
            "vocabulary has no word-initial tokens to build words from".into(),
        ));
    }

    let mut utterances = Vec::with_capacity(n_utterances);
    let mut alignments = Vec::new();
    let frame_period_ms = DEFAULT_FRAME_PERIOD_MS;
    for u in 0..n_utterances {
        let id = format!("u{u:04}");
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, u as u64));
        let n_words = rng.gen_range(min_words..=max_words);

        let mut tokens: Vec<TokenId> = Vec::new();
        let mut word_spans: Vec<(usize, usize)> = Vec::new();
        for _ in 0..n_words {
            let start = tokens.len();
            tokens.push(initials[rng.gen_range(0..initials.len())]);
            if !continuations.is_empty() {
                for _ in 0..rng.gen_range(0..=2usize) {
                    tokens.push(continuations[rng.gen_range(0..continuations.len())]);
                }
            }
            word_spans.push((start, tokens.len() - 1));
        }
        let reference_words = vocab.tokens_to_words(&tokens)?;
        debug_assert_eq!(reference_words.len(), n_words);

        let mut with_eos = tokens.clone();
        with_eos.push(vocab.eos_id());
        let tail = rng.gen_range(FRAMES_PER_TOKEN..=2 * FRAMES_PER_TOKEN);
        let stream = encode_stream(&with_eos, dim, frame_period_ms, tail, &mut rng)?;

        for (w, &(first, last)) in word_spans.iter().enumerate() {
            alignments.push(WordAlignment {
                utt: id.clone(),
                word: reference_words[w].clone(),
                start_s: first as f64 * FRAMES_PER_TOKEN as f64 * frame_period_ms / 1000.0,
                end_s: (last + 1) as f64 * FRAMES_PER_TOKEN as f64 * frame_period_ms / 1000.0,
            });
        }
        utterances.push(Utterance {
            id,
            stream,
            reference_tokens: tokens,
            reference_words,
        });
    }

    Ok(Corpus {
        utterances,
        alignments,
        vocab: vocab.clone(),
        scorer_spec: ScorerSpec::synthetic(seed),
        dim,
        frame_period_ms,
        seed,
    })
}

// ── Corpus on disk ──────────────────────────────────────────────────────────
//
// A corpus directory holds vocab.txt, scorer.cfg, refs.txt, corpus.ctm, one
// .feats file per utterance, and corpus.manifest listing everything with
// content digests.

fn sha256_hex(contents: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(contents.as_bytes());
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn write_corpus(corpus: &Corpus, dir: &Path) -> Result<PathBuf> {
    let mut files: Vec<(String, String)> = Vec::new();
    files.push(("vocab.txt".to_string(), format_vocab(&corpus.vocab)));
    files.push(("scorer.cfg".to_string(), format_scorer_spec(&corpus.scorer_spec)));
    files.push(("corpus.ctm".to_string(), format_ctm(&corpus.alignments)));
    let mut refs = String::new();
    for u in &corpus.utterances {
        refs.push_str(&format!("{}\t{}\n", u.id, u.reference_words.join(" ")));
    }
    files.push(("refs.txt".to_string(), refs));
    for u in &corpus.utterances {
        files.push((format!("{}.feats", u.id), format_features(&u.stream)));
    }

    let mut manifest = String::from("# streamdec corpus manifest v1\n");
    manifest.push_str(&format!("seed={}\n", corpus.seed));
    manifest.push_str(&format!("dim={}\n", corpus.dim));
    manifest.push_str(&format!("frame_period_ms={}\n", corpus.frame_period_ms));
    manifest.push_str(&format!("n_utterances={}\n", corpus.utterances.len()));
    manifest.push_str("vocab=vocab.txt\n");
    manifest.push_str("scorer_spec=scorer.cfg\n");
    manifest.push_str("alignments=corpus.ctm\n");
    manifest.push_str("references=refs.txt\n");
    for u in &corpus.utterances {
        let tokens: Vec<String> = u.reference_tokens.iter().map(|t| t.to_string()).collect();
        manifest.push_str(&format!(
            "utt={}\tfeatures={}.feats\ttokens={}\n",
            u.id,
            u.id,
            tokens.join(" ")
        ));
    }
    for (name, contents) in &files {
        manifest.push_str(&format!("file={name}\tsha256={}\n", sha256_hex(contents)));
    }

    for (name, contents) in &files {
        write_atomic(&dir.join(name), contents)?;
    }
    let manifest_path = dir.join("corpus.manifest");
    write_atomic(&manifest_path, &manifest)?;
    Ok(manifest_path)
}

pub fn read_corpus(manifest_path: &Path) -> Result<Corpus> {
    let name = manifest_path.to_string_lossy().to_string();
    let text = std::fs::read_to_string(manifest_path)?;
    let dir = manifest_path.parent().unwrap_or_else(|| Path::new("."));

    let mut keys: BTreeMap<String, String> = BTreeMap::new();
    let mut utts: Vec<(String, String, Vec<TokenId>)> = Vec::new();
    let mut digests: Vec<(String, String)> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("utt=") {
            let mut parts = rest.split('\t');
            let id = parts
                .next()
                .ok_or_else(|| Error::parse(&name, line_no, "missing utt id"))?
                .to_string();
            let feats = parts
                .next()
                .and_then(|p| p.strip_prefix("features="))
                .ok_or_else(|| Error::parse(&name, line_no, "missing features="))?
                .to_string();
            let tokens = parts
                .next()
                .and_then(|p| p.strip_prefix("tokens="))
                .ok_or_else(|| Error::parse(&name, line_no, "missing tokens="))?;
            let tokens: Vec<TokenId> = tokens
                .split_whitespace()
                .map(|t| {
                    t.parse()
                        .map_err(|_| Error::parse(&name, line_no, format!("bad token id `{t}`")))
                })
                .collect::<Result<_>>()?;
            utts.push((id, feats, tokens));
            continue;
        }
        if let Some(rest) = line.strip_prefix("file=") {
            let (file, digest) = rest
                .split_once('\t')
                .and_then(|(f, d)| d.strip_prefix("sha256=").map(|d| (f, d)))
                .ok_or_else(|| Error::parse(&name, line_no, "malformed file digest line"))?;
            digests.push((file.to_string(), digest.to_string()));
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::parse(&name, line_no, format!("expected key=value, got `{line}`")))?;
        keys.insert(k.to_string(), v.to_string());
    }

    let get = |k: &str| -> Result<&String> {
        keys.get(k)
            .ok_or_else(|| Error::parse(&name, 1, format!("manifest missing `{k}`")))
    };
    let read_checked = |file: &str| -> Result<String> {
        let contents = std::fs::read_to_string(dir.join(file))?;
        if let Some((_, expected)) = digests.iter().find(|(f, _)| f == file) {
            let got = sha256_hex(&contents);
            if &got != expected {
                return Err(Error::InvalidConfig(format!(
                    "digest mismatch for `{file}` (manifest {expected}, file {got})"
                )));
            }
        }
        Ok(contents)
    };

    let seed: u64 = get("seed")?.parse().map_err(|_| Error::parse(&name, 1, "bad seed"))?;
    let dim: usize = get("dim")?.parse().map_err(|_| Error::parse(&name, 1, "bad dim"))?;
    let frame_period_ms: f64 = get("frame_period_ms")?
        .parse()
        .map_err(|_| Error::parse(&name, 1, "bad frame_period_ms"))?;

    let vocab_file = get("vocab")?.clone();
    let vocab = Arc::new(parse_vocab(&vocab_file, &read_checked(&vocab_file)?)?);
    let spec_file = get("scorer_spec")?.clone();
    let scorer_spec = parse_scorer_spec(&spec_file, &read_checked(&spec_file)?)?;
    let ctm_file = get("alignments")?.clone();
    let alignments = parse_ctm(&ctm_file, &read_checked(&ctm_file)?)?;
    let refs_file = get("references")?.clone();
    let refs_text = read_checked(&refs_file)?;
    let mut references: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for (idx, line) in refs_text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (id, words) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(&refs_file, idx + 1, "expected `utt\\twords`"))?;
        references.insert(
            id.to_string(),
            words.split_whitespace().map(|w| w.to_string()).collect(),
        );
    }

    let mut utterances = Vec::with_capacity(utts.len());
    for (id, feats_file, reference_tokens) in utts {
        let stream = parse_features(&feats_file, &read_checked(&feats_file)?)?;
        if stream.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: stream.dim(),
            });
        }
        let reference_words = references
            .get(&id)
            .cloned()
            .ok_or_else(|| Error::InvalidConfig(format!("no reference for utterance `{id}`")))?;
        utterances.push(Utterance {
            id,
            stream,
            reference_tokens,
            reference_words,
        });
    }

    Ok(Corpus {
        utterances,
        alignments,
        vocab,
        scorer_spec,
        dim,
        frame_period_ms,
        seed,
    })
}
