//! Token inventory and the token-to-word merge.
//!
//! Tokens are sub-word pieces; a token whose string starts with the
//! word-boundary marker opens a new word (sentencepiece convention).

use crate::error::{Error, Result};
use crate::hyp::TokenId;
use std::collections::HashSet;

#[derive(Debug, Clone)]
pub struct Vocabulary {
    tokens: Vec<String>,
    word_boundary_marker: String,
    eos_id: TokenId,
}

impl Vocabulary {
    pub fn new(tokens: Vec<String>, word_boundary_marker: &str, eos_id: TokenId) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::EmptyInput("vocabulary"));
        }
        if (eos_id as usize) >= tokens.len() {
            return Err(Error::InvalidConfig(format!(
                "eos id {eos_id} out of range for vocabulary of size {}",
                tokens.len()
            )));
        }
        if word_boundary_marker.is_empty() {
            return Err(Error::InvalidConfig("empty word boundary marker".into()));
        }
        let mut seen = HashSet::new();
        for (i, t) in tokens.iter().enumerate() {
            if !seen.insert(t.as_str()) {
                return Err(Error::InvalidConfig(format!(
                    "duplicate token `{t}` at id {i}"
                )));
            }
        }
        Ok(Self {
            tokens,
            word_boundary_marker: word_boundary_marker.to_string(),
            eos_id,
        })
    }

    pub fn size(&self) -> usize {
        self.tokens.len()
    }

    pub fn eos_id(&self) -> TokenId {
        self.eos_id
    }

    pub fn word_boundary_marker(&self) -> &str {
        &self.word_boundary_marker
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id as usize).map(|s| s.as_str())
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn is_word_initial(&self, id: TokenId) -> bool {
        self.token(id)
            .map(|t| t.starts_with(&self.word_boundary_marker))
            .unwrap_or(false)
    }

    /// Merge a token sequence into words. Marker-prefixed tokens start new
    /// words, eos is dropped, anything before the first marker forms a word
    /// of its own.
    pub fn tokens_to_words(&self, tokens: &[TokenId]) -> Result<Vec<String>> {
        let mut words: Vec<String> = Vec::new();
        let mut current: Option<String> = None;
        for (position, &id) in tokens.iter().enumerate() {
            if id == self.eos_id {
                continue;
            }
            let piece = self
                .token(id)
                .ok_or(Error::UnknownToken { position, id })?;
            if let Some(stripped) = piece.strip_prefix(&self.word_boundary_marker) {
                if let Some(w) = current.take() {
                    words.push(w);
                }
                current = Some(stripped.to_string());
            } else {
                match current.as_mut() {
                    Some(w) => w.push_str(piece),
                    None => current = Some(piece.to_string()),
                }
            }
        }
        if let Some(w) = current.take() {
            words.push(w);
        }
        Ok(words)
    }
}

// ── Vocabulary file format ──────────────────────────────────────────────────
//
// Header line: `eos_id=<id>\tword_boundary_marker=<m>`, then one token
// string per line; the line order defines the dense token ids.

pub fn parse_vocab(name: &str, text: &str) -> Result<Vocabulary> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::parse(name, 1, "empty vocabulary file"))?;
    let mut eos: Option<TokenId> = None;
    let mut marker: Option<String> = None;
    for field in header.split('\t') {
        match field.split_once('=') {
            Some(("eos_id", v)) => {
                eos = Some(
                    v.parse()
                        .map_err(|_| Error::parse(name, 1, format!("bad eos_id `{v}`")))?,
                )
            }
            Some(("word_boundary_marker", v)) => marker = Some(v.to_string()),
            _ => return Err(Error::parse(name, 1, format!("unexpected header field `{field}`"))),
        }
    }
    let eos = eos.ok_or_else(|| Error::parse(name, 1, "missing eos_id"))?;
    let marker = marker.ok_or_else(|| Error::parse(name, 1, "missing word_boundary_marker"))?;
    let tokens: Vec<String> = lines.map(|l| l.to_string()).collect();
    Vocabulary::new(tokens, &marker, eos).map_err(|e| Error::parse(name, 1, e.to_string()))
}

pub fn format_vocab(vocab: &Vocabulary) -> String {
    let mut out = format!(
        "eos_id={}\tword_boundary_marker={}\n",
        vocab.eos_id(),
        vocab.word_boundary_marker()
    );
    for t in vocab.tokens() {
        out.push_str(t);
        out.push('\n');
    }
    out
}
