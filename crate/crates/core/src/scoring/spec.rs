//! Scorer configuration: a small `key=value` text format, nested through
//! `member.N.` prefixes, read by the CLI `--scorer-spec` flag.
//!
//! ```text
//! kind=ensemble
//! attention_source=member:0
//! weights=0.5 0.5
//! member.0.kind=synthetic
//! member.0.seed=7
//! member.1.kind=synthetic
//! member.1.seed=8
//! member.1.noise_level=0.4
//! member.1.noise_seed=3
//! ```

use super::{build_synthetic_scorer, AttentionSource, EnsembleScorer, Scorer};
use crate::error::{Error, Result};
use crate::vocab::Vocabulary;
use std::collections::BTreeMap;
use std::sync::Arc;

#[derive(Debug, Clone, PartialEq)]
pub enum ScorerSpec {
    Synthetic {
        seed: u64,
        noise_level: f64,
        noise_seed: u64,
    },
    Ensemble {
        members: Vec<ScorerSpec>,
        weights: Vec<f64>,
        attention_source: AttentionSource,
    },
}

impl ScorerSpec {
    pub fn synthetic(seed: u64) -> Self {
        ScorerSpec::Synthetic {
            seed,
            noise_level: 0.0,
            noise_seed: 0,
        }
    }

    pub fn uniform_ensemble(members: Vec<ScorerSpec>) -> Self {
        let n = members.len().max(1);
        ScorerSpec::Ensemble {
            members,
            weights: vec![1.0 / n as f64; n],
            attention_source: AttentionSource::Member(0),
        }
    }
}

/// Instantiate the scorer a spec describes.
pub fn build_scorer(spec: &ScorerSpec, vocab: &Vocabulary, dim: usize) -> Result<Arc<dyn Scorer>> {
    match spec {
        ScorerSpec::Synthetic {
            seed,
            noise_level,
            noise_seed,
        } => {
            let scorer = build_synthetic_scorer(*seed, vocab, dim)?.with_noise(*noise_level, *noise_seed);
            Ok(Arc::new(scorer))
        }
        ScorerSpec::Ensemble {
            members,
            weights,
            attention_source,
        } => {
            let built: Vec<Arc<dyn Scorer>> = members
                .iter()
                .map(|m| build_scorer(m, vocab, dim))
                .collect::<Result<_>>()?;
            Ok(Arc::new(EnsembleScorer::new(
                built,
                weights.clone(),
                *attention_source,
            )?))
        }
    }
}

/// Derive a deterministically perturbed spec. Level 0 returns the spec
/// unchanged; ensemble members get per-member derived seeds.
pub fn corrupt_scorer(spec: &ScorerSpec, noise_level: f64, seed: u64) -> ScorerSpec {
    if noise_level == 0.0 {
        return spec.clone();
    }
    match spec {
        ScorerSpec::Synthetic { seed: s, .. } => ScorerSpec::Synthetic {
            seed: *s,
            noise_level,
            noise_seed: seed,
        },
        ScorerSpec::Ensemble {
            members,
            weights,
            attention_source,
        } => ScorerSpec::Ensemble {
            members: members
                .iter()
                .enumerate()
                .map(|(i, m)| corrupt_scorer(m, noise_level, seed.wrapping_add(i as u64 + 1)))
                .collect(),
            weights: weights.clone(),
            attention_source: *attention_source,
        },
    }
}

pub fn format_scorer_spec(spec: &ScorerSpec) -> String {
    let mut out = String::new();
    write_spec(spec, "", &mut out);
    out
}

fn write_spec(spec: &ScorerSpec, prefix: &str, out: &mut String) {
    match spec {
        ScorerSpec::Synthetic {
            seed,
            noise_level,
            noise_seed,
        } => {
            out.push_str(&format!("{prefix}kind=synthetic\n"));
            out.push_str(&format!("{prefix}seed={seed}\n"));
            if *noise_level != 0.0 {
                out.push_str(&format!("{prefix}noise_level={noise_level}\n"));
                out.push_str(&format!("{prefix}noise_seed={noise_seed}\n"));
            }
        }
        ScorerSpec::Ensemble {
            members,
            weights,
            attention_source,
        } => {
            out.push_str(&format!("{prefix}kind=ensemble\n"));
            let src = match attention_source {
                AttentionSource::Member(i) => format!("member:{i}"),
                AttentionSource::Average => "average".to_string(),
                AttentionSource::None => "none".to_string(),
            };
            out.push_str(&format!("{prefix}attention_source={src}\n"));
            let ws: Vec<String> = weights.iter().map(|w| format!("{w}")).collect();
            out.push_str(&format!("{prefix}weights={}\n", ws.join(" ")));
            for (i, m) in members.iter().enumerate() {
                write_spec(m, &format!("{prefix}member.{i}."), out);
            }
        }
    }
}

pub fn parse_scorer_spec(name: &str, text: &str) -> Result<ScorerSpec> {
    let mut fields: BTreeMap<String, (usize, String)> = BTreeMap::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::parse(name, idx + 1, format!("expected key=value, got `{line}`")))?;
        if fields.insert(k.to_string(), (idx + 1, v.to_string())).is_some() {
            return Err(Error::parse(name, idx + 1, format!("duplicate key `{k}`")));
        }
    }
    parse_group(name, &fields)
}

fn parse_group(name: &str, fields: &BTreeMap<String, (usize, String)>) -> Result<ScorerSpec> {
    let (kind_line, kind) = fields
        .get("kind")
        .ok_or_else(|| Error::parse(name, 1, "missing `kind`"))?;
    match kind.as_str() {
        "synthetic" => {
            let seed = parse_field(name, fields, "seed")?
                .ok_or_else(|| Error::parse(name, *kind_line, "synthetic scorer needs `seed`"))?;
            let noise_level = parse_field(name, fields, "noise_level")?.unwrap_or(0.0);
            let noise_seed = parse_field(name, fields, "noise_seed")?.unwrap_or(0);
            Ok(ScorerSpec::Synthetic {
                seed,
                noise_level,
                noise_seed,
            })
        }
        "ensemble" => {
            let attention_source = match fields.get("attention_source") {
                None => AttentionSource::Member(0),
                Some((line, v)) => match v.as_str() {
                    "average" => AttentionSource::Average,
                    "none" => AttentionSource::None,
                    other => match other.strip_prefix("member:") {
                        Some(i) => AttentionSource::Member(i.parse().map_err(|_| {
                            Error::parse(name, *line, format!("bad attention_source `{other}`"))
                        })?),
                        None => {
                            return Err(Error::parse(
                                name,
                                *line,
                                format!("bad attention_source `{other}`"),
                            ))
                        }
                    },
                },
            };
            let (wline, wstr) = fields
                .get("weights")
                .ok_or_else(|| Error::parse(name, *kind_line, "ensemble needs `weights`"))?;
            let weights: Vec<f64> = wstr
                .split_whitespace()
                .map(|w| {
                    w.parse()
                        .map_err(|_| Error::parse(name, *wline, format!("bad weight `{w}`")))
                })
                .collect::<Result<_>>()?;

            // Group `member.N.*` keys and recurse.
            let mut groups: BTreeMap<usize, BTreeMap<String, (usize, String)>> = BTreeMap::new();
            for (k, v) in fields {
                if let Some(rest) = k.strip_prefix("member.") {
                    let (idx, sub) = rest.split_once('.').ok_or_else(|| {
                        Error::parse(name, v.0, format!("malformed member key `{k}`"))
                    })?;
                    let idx: usize = idx
                        .parse()
                        .map_err(|_| Error::parse(name, v.0, format!("bad member index in `{k}`")))?;
                    groups.entry(idx).or_default().insert(sub.to_string(), v.clone());
                }
            }
            if groups.is_empty() {
                return Err(Error::parse(name, *kind_line, "ensemble needs at least one member"));
            }
            let n = groups.len();
            if groups.keys().copied().ne(0..n) {
                return Err(Error::parse(
                    name,
                    *kind_line,
                    "member indices must be dense from 0",
                ));
            }
            let members: Vec<ScorerSpec> = groups
                .values()
                .map(|g| parse_group(name, g))
                .collect::<Result<_>>()?;
            if weights.len() != members.len() {
                return Err(Error::parse(
                    name,
                    *wline,
                    format!("{} weights for {} members", weights.len(), members.len()),
                ));
            }
            Ok(ScorerSpec::Ensemble {
                members,
                weights,
                attention_source,
            })
        }
        other => Err(Error::parse(name, *kind_line, format!("unknown scorer kind `{other}`"))),
    }
}

fn parse_field<T: std::str::FromStr>(
    name: &str,
    fields: &BTreeMap<String, (usize, String)>,
    key: &str,
) -> Result<Option<T>> {
    match fields.get(key) {
        None => Ok(None),
        Some((line, v)) => v
            .parse()
            .map(Some)
            .map_err(|_| Error::parse(name, *line, format!("bad value for `{key}`: `{v}`"))),
    }
}
