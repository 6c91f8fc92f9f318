//! Latency measurement and accuracy scoring.
//!
//! Per-word latency decomposes as `C_w + D_w + T_w - U_w`: the audio
//! position the system had consumed when the word became final (`C`), the
//! compute delay of the step that finalized it (`D`), transmission time
//! (`T`, omitted), minus the time the word was actually finished being
//! uttered (`U`). Averaged over a corpus this splits user-perceived latency
//! into a compute part (`D_avg`, whose audio-normalized form is the
//! real-time factor) and a confidence part: how much acoustic evidence
//! beyond a word's end the model needs before committing it.
//!
//! The confidence part is extracted through a conversion chart: word end
//! times are normalized per utterance, shifted right by a grid of delays
//! and averaged (clamping at the utterance end, where a commit would
//! saturate). Looking up a measured average commit position `C_avg` in the
//! chart yields the equivalent uniform delay.

use crate::config::{DetectorMode, SessionConfig};
use crate::error::{Error, Result};
use crate::pipeline::{run_session, LoggedSession, SessionResult};
use crate::scoring::build_scorer;
use crate::synthesis::Corpus;
use std::collections::HashMap;

/// Time alignment of one reference word, in seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct WordAlignment {
    pub utt: String,
    pub word: String,
    pub start_s: f64,
    pub end_s: f64,
}

// ── Alignment file (CTM-like): `utt word start_s end_s` per line ────────────

pub fn parse_ctm(name: &str, text: &str) -> Result<Vec<WordAlignment>> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 4 {
            return Err(Error::parse(
                name,
                idx + 1,
                format!("expected `utt word start_s end_s`, got {} fields", parts.len()),
            ));
        }
        let start_s: f64 = parts[2]
            .parse()
            .map_err(|_| Error::parse(name, idx + 1, format!("bad start `{}`", parts[2])))?;
        let end_s: f64 = parts[3]
            .parse()
            .map_err(|_| Error::parse(name, idx + 1, format!("bad end `{}`", parts[3])))?;
        if start_s < 0.0 || end_s < start_s {
            return Err(Error::parse(name, idx + 1, "alignment times out of order"));
        }
        out.push(WordAlignment {
            utt: parts[0].to_string(),
            word: parts[1].to_string(),
            start_s,
            end_s,
        });
    }
    Ok(out)
}

pub fn format_ctm(alignments: &[WordAlignment]) -> String {
    let mut out = String::new();
    for a in alignments {
        out.push_str(&format!("{} {} {:.3} {:.3}\n", a.utt, a.word, a.start_s, a.end_s));
    }
    out
}

// ── Conversion chart ────────────────────────────────────────────────────────

/// Precomputed map from delay to average shifted word-end position, in
/// normalized (per-utterance-length) units.
#[derive(Debug, Clone, PartialEq)]
pub struct ConversionChart {
    /// Ascending delays, normalized units.
    pub delta_grid: Vec<f64>,
    /// Mean over words of `min(U_w + delta, 1)`.
    pub u_avg_shifted: Vec<f64>,
    /// Mean over words of `U_w + delta`, i.e. exactly `U_avg + delta`.
    pub u_avg_unclamped: Vec<f64>,
    /// Mean normalized word end time.
    pub u_avg: f64,
}

/// Normalized word end times for a set of alignments, given per-utterance
/// durations in seconds.
pub fn normalized_word_ends(
    alignments: &[WordAlignment],
    durations_s: &HashMap<String, f64>,
) -> Result<Vec<f64>> {
    let mut ends = Vec::with_capacity(alignments.len());
    for a in alignments {
        let dur = durations_s
            .get(&a.utt)
            .copied()
            .ok_or_else(|| Error::InvalidConfig(format!("no duration for utterance `{}`", a.utt)))?;
        if !(dur > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "zero-duration utterance `{}`",
                a.utt
            )));
        }
        ends.push(a.end_s / dur);
    }
    Ok(ends)
}

pub fn build_conversion_chart(
    alignments: &[WordAlignment],
    durations_s: &HashMap<String, f64>,
    delta_grid: &[f64],
) -> Result<ConversionChart> {
    if alignments.is_empty() {
        return Err(Error::EmptyInput("alignments"));
    }
    if delta_grid.is_empty() {
        return Err(Error::EmptyInput("delta grid"));
    }
    if delta_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidConfig("delta grid must be strictly ascending".into()));
    }
    let ends = normalized_word_ends(alignments, durations_s)?;
    let n = ends.len() as f64;
    let u_avg = ends.iter().sum::<f64>() / n;
    let mut u_avg_shifted = Vec::with_capacity(delta_grid.len());
    let mut u_avg_unclamped = Vec::with_capacity(delta_grid.len());
    for &delta in delta_grid {
        let clamped: f64 = ends.iter().map(|&u| (u + delta).min(1.0)).sum::<f64>() / n;
        u_avg_shifted.push(clamped);
        u_avg_unclamped.push(u_avg + delta);
    }
    Ok(ConversionChart {
        delta_grid: delta_grid.to_vec(),
        u_avg_shifted,
        u_avg_unclamped,
        u_avg,
    })
}

/// Invert the chart: the delay whose shifted average is closest to `c_avg`,
/// linearly interpolated between grid neighbors. The flag reports clamping
/// to a grid end.
pub fn confidence_latency(c_avg: f64, chart: &ConversionChart) -> (f64, bool) {
    let grid = &chart.delta_grid;
    let vals = &chart.u_avg_shifted;
    if c_avg <= vals[0] {
        return (grid[0], c_avg < vals[0]);
    }
    let last = vals.len() - 1;
    if c_avg >= vals[last] {
        return (grid[last], c_avg > vals[last]);
    }
    for i in 0..last {
        if c_avg <= vals[i + 1] {
            let span = vals[i + 1] - vals[i];
            if span <= 0.0 {
                return (grid[i], false); // flat (saturated) segment
            }
            let frac = (c_avg - vals[i]) / span;
            return (grid[i] + frac * (grid[i + 1] - grid[i]), false);
        }
    }
    (grid[last], false)
}

/// Default delay grid: 0 to 5 seconds in 50 ms steps, expressed in
/// normalized units for a given mean utterance duration.
pub fn default_delta_grid(mean_duration_s: f64) -> Vec<f64> {
    let steps = 101;
    (0..steps)
        .map(|i| (i as f64 * 0.05) / mean_duration_s)
        .collect()
}

// ── Per-word latency ────────────────────────────────────────────────────────

/// `Latency_w = C_w + D_w + T_w - U_w`; `t_w` defaults to zero upstream.
pub fn word_latency(u_w: f64, c_w: f64, d_w: f64, t_w: f64) -> f64 {
    c_w + d_w + t_w - u_w
}

/// One matched word with everything needed for latency bookkeeping.
#[derive(Debug, Clone)]
pub struct WordLatencyRecord {
    pub utt: String,
    pub word: String,
    /// Audio position consumed when the word became final, seconds.
    pub c_s: f64,
    /// Compute time of the step that finalized it, seconds.
    pub d_s: f64,
    /// Alignment end time, seconds.
    pub u_s: f64,
    pub c_norm: f64,
    pub u_norm: f64,
}

/// Case-insensitive in-order matching (longest common subsequence) between
/// hypothesis words and reference words. Returns matched index pairs.
fn match_words(hyp: &[String], reference: &[String]) -> Vec<(usize, usize)> {
    let n = hyp.len();
    let m = reference.len();
    let eq = |i: usize, j: usize| hyp[i].eq_ignore_ascii_case(&reference[j]);
    let mut dp = vec![vec![0usize; m + 1]; n + 1];
    for i in (0..n).rev() {
        for j in (0..m).rev() {
            dp[i][j] = if eq(i, j) {
                dp[i + 1][j + 1] + 1
            } else {
                dp[i + 1][j].max(dp[i][j + 1])
            };
        }
    }
    let mut pairs = Vec::new();
    let (mut i, mut j) = (0, 0);
    while i < n && j < m {
        if eq(i, j) {
            pairs.push((i, j));
            i += 1;
            j += 1;
        } else if dp[i + 1][j] >= dp[i][j + 1] {
            i += 1;
        } else {
            j += 1;
        }
    }
    pairs
}

/// Fraction of words allowed to go unmatched, pooled over the sessions a
/// metric aggregates, before the run errors.
pub const WORD_MATCH_TOLERANCE: f64 = 0.05;

/// Unmatched-word bookkeeping from pairing one session with its alignments.
#[derive(Debug, Clone, Default)]
pub struct WordMatchStats {
    pub unmatched: usize,
    pub total: usize,
    pub examples: Vec<String>,
}

impl WordMatchStats {
    pub fn absorb(&mut self, other: &WordMatchStats) {
        self.unmatched += other.unmatched;
        self.total += other.total;
        for e in &other.examples {
            if self.examples.len() >= 10 {
                break;
            }
            self.examples.push(e.clone());
        }
    }

    /// Error when the pooled unmatched fraction exceeds the tolerance.
    pub fn enforce_tolerance(&self) -> Result<()> {
        if self.total == 0 {
            return Err(Error::WordMatch("no words to match".into()));
        }
        if self.unmatched as f64 > WORD_MATCH_TOLERANCE * self.total as f64 {
            return Err(Error::WordMatch(format!(
                "{} of {} words unmatched (tolerance {:.0}%); e.g. {:?}",
                self.unmatched,
                self.total,
                WORD_MATCH_TOLERANCE * 100.0,
                self.examples
            )));
        }
        Ok(())
    }
}

/// Pair a session's released words with the utterance's alignments and
/// collect per-word latency records. Unmatched words (recognition errors)
/// are skipped and counted; tolerance is enforced by the caller at the
/// aggregation level.
pub fn collect_word_latencies(
    utt: &str,
    result: &SessionResult,
    alignments: &[WordAlignment],
) -> Result<(Vec<WordLatencyRecord>, WordMatchStats)> {
    if result.commits.is_empty() {
        return Err(Error::EmptyInput("commit list"));
    }
    let duration_s = result.audio_duration_ms / 1000.0;
    if !(duration_s > 0.0) {
        return Err(Error::InvalidConfig(format!("zero-duration utterance `{utt}`")));
    }

    // words in release order with their commit's audio position and the
    // releasing step's compute time
    let mut hyp_words: Vec<(String, f64, f64)> = Vec::new();
    for c in &result.commits {
        let d_ms = result
            .steps
            .get(c.step_index)
            .map(|s| s.compute_ms)
            .unwrap_or(0.0);
        for w in &c.words {
            hyp_words.push((w.clone(), c.audio_consumed_ms, d_ms));
        }
    }

    let mut refs: Vec<&WordAlignment> = alignments.iter().filter(|a| a.utt == utt).collect();
    refs.sort_by(|a, b| a.end_s.partial_cmp(&b.end_s).unwrap_or(std::cmp::Ordering::Equal));

    let hyp_strings: Vec<String> = hyp_words.iter().map(|(w, _, _)| w.clone()).collect();
    let ref_strings: Vec<String> = refs.iter().map(|a| a.word.clone()).collect();
    let pairs = match_words(&hyp_strings, &ref_strings);

    let stats = WordMatchStats {
        unmatched: (hyp_strings.len() - pairs.len()) + (ref_strings.len() - pairs.len()),
        total: hyp_strings.len() + ref_strings.len(),
        examples: ref_strings
            .iter()
            .enumerate()
            .filter(|(j, _)| !pairs.iter().any(|&(_, pj)| pj == *j))
            .map(|(_, w)| format!("{utt}:{w}"))
            .take(10)
            .collect(),
    };

    let records = pairs
        .into_iter()
        .map(|(i, j)| {
            let (word, c_ms, d_ms) = &hyp_words[i];
            WordLatencyRecord {
                utt: utt.to_string(),
                word: word.clone(),
                c_s: c_ms / 1000.0,
                d_s: d_ms / 1000.0,
                u_s: refs[j].end_s,
                c_norm: (c_ms / 1000.0) / duration_s,
                u_norm: refs[j].end_s / duration_s,
            }
        })
        .collect();
    Ok((records, stats))
}

/// Averages of the per-word terms, in both seconds and normalized units.
#[derive(Debug, Clone, PartialEq)]
pub struct LatencyDecomposition {
    pub d_avg_s: f64,
    pub c_avg_s: f64,
    pub u_avg_s: f64,
    pub c_avg_norm: f64,
    pub u_avg_norm: f64,
    pub mean_latency_s: f64,
    pub matched_words: usize,
    pub skipped_words: usize,
}

pub fn decompose(records: &[WordLatencyRecord], skipped: usize) -> Result<LatencyDecomposition> {
    if records.is_empty() {
        return Err(Error::EmptyInput("matched words"));
    }
    let n = records.len() as f64;
    let d_avg_s = records.iter().map(|r| r.d_s).sum::<f64>() / n;
    let c_avg_s = records.iter().map(|r| r.c_s).sum::<f64>() / n;
    let u_avg_s = records.iter().map(|r| r.u_s).sum::<f64>() / n;
    Ok(LatencyDecomposition {
        d_avg_s,
        c_avg_s,
        u_avg_s,
        c_avg_norm: records.iter().map(|r| r.c_norm).sum::<f64>() / n,
        u_avg_norm: records.iter().map(|r| r.u_norm).sum::<f64>() / n,
        mean_latency_s: d_avg_s + c_avg_s - u_avg_s,
        matched_words: records.len(),
        skipped_words: skipped,
    })
}

/// Per-session decomposition straight from commits and alignments. The
/// word-match tolerance applies to this single session.
pub fn session_latency_decomposition(
    utt: &str,
    result: &SessionResult,
    alignments: &[WordAlignment],
) -> Result<LatencyDecomposition> {
    let (records, stats) = collect_word_latencies(utt, result, alignments)?;
    stats.enforce_tolerance()?;
    decompose(&records, stats.unmatched)
}

// ── RTF and WER ─────────────────────────────────────────────────────────────

pub fn rtf(total_compute_ms: f64, audio_duration_ms: f64) -> Result<f64> {
    if !(audio_duration_ms > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "audio duration must be positive, got {audio_duration_ms}"
        )));
    }
    Ok(total_compute_ms / audio_duration_ms)
}

/// Word-level edit distance with unit substitution/insertion/deletion costs.
pub fn edit_distance(a: &[String], b: &[String]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut curr = vec![0usize; b.len() + 1];
    for i in 1..=a.len() {
        curr[0] = i;
        for j in 1..=b.len() {
            let cost = usize::from(a[i - 1] != b[j - 1]);
            curr[j] = (prev[j] + 1).min(curr[j - 1] + 1).min(prev[j - 1] + cost);
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[b.len()]
}

/// Edit distance divided by reference length. Errors on empty references.
pub fn wer(reference: &[String], hypothesis: &[String]) -> Result<f64> {
    if reference.is_empty() {
        return Err(Error::EmptyInput("reference words"));
    }
    Ok(edit_distance(reference, hypothesis) as f64 / reference.len() as f64)
}

pub fn normalize_words(words: &[String]) -> Vec<String> {
    words.iter().map(|w| w.to_lowercase()).collect()
}

/// Pooled corpus WER: total edits over total reference length.
pub fn corpus_wer(pairs: &[(Vec<String>, Vec<String>)], case_insensitive: bool) -> Result<f64> {
    let mut edits = 0usize;
    let mut ref_len = 0usize;
    for (reference, hypothesis) in pairs {
        if reference.is_empty() {
            return Err(Error::EmptyInput("reference words"));
        }
        let (r, h) = if case_insensitive {
            (normalize_words(reference), normalize_words(hypothesis))
        } else {
            (reference.clone(), hypothesis.clone())
        };
        edits += edit_distance(&r, &h);
        ref_len += r.len();
    }
    if ref_len == 0 {
        return Err(Error::EmptyInput("references"));
    }
    Ok(edits as f64 / ref_len as f64)
}

// ── Corpus-level metrics ────────────────────────────────────────────────────

/// One decoding run's headline numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionMetrics {
    pub d_avg_ms: f64,
    pub c_avg_norm: f64,
    pub confidence_latency_s: f64,
    pub rtf: f64,
    pub wer: f64,
    pub confidence_latency_norm: f64,
    pub u_avg_norm: f64,
    pub clamped: bool,
    pub matched_words: usize,
    pub skipped_words: usize,
}

/// Compute corpus metrics from decoded sessions, alignments and references.
/// The chart is built from the alignments unless one is supplied.
pub fn corpus_metrics(
    sessions: &[LoggedSession],
    alignments: &[WordAlignment],
    references: &HashMap<String, Vec<String>>,
    chart: Option<&ConversionChart>,
) -> Result<SessionMetrics> {
    if sessions.is_empty() {
        return Err(Error::EmptyInput("sessions"));
    }
    let durations_s: HashMap<String, f64> = sessions
        .iter()
        .map(|s| (s.utt.clone(), s.result.audio_duration_ms / 1000.0))
        .collect();

    let mut records = Vec::new();
    let mut match_stats = WordMatchStats::default();
    let mut total_compute_ms = 0.0;
    let mut total_audio_ms = 0.0;
    let mut wer_pairs: Vec<(Vec<String>, Vec<String>)> = Vec::new();
    for s in sessions {
        let (mut r, stats) = collect_word_latencies(&s.utt, &s.result, alignments)?;
        records.append(&mut r);
        match_stats.absorb(&stats);
        total_compute_ms += s.result.total_compute_ms();
        total_audio_ms += s.result.audio_duration_ms;
        let reference = references
            .get(&s.utt)
            .ok_or_else(|| Error::InvalidConfig(format!("no reference for utterance `{}`", s.utt)))?;
        wer_pairs.push((reference.clone(), s.result.final_words.clone()));
    }
    match_stats.enforce_tolerance()?;
    let decomposition = decompose(&records, match_stats.unmatched)?;

    let mean_duration_s =
        durations_s.values().sum::<f64>() / durations_s.len().max(1) as f64;
    let built;
    let chart = match chart {
        Some(c) => c,
        None => {
            let grid = default_delta_grid(mean_duration_s);
            built = build_conversion_chart(alignments, &durations_s, &grid)?;
            &built
        }
    };
    let (delta_norm, clamped) = confidence_latency(decomposition.c_avg_norm, chart);

    Ok(SessionMetrics {
        d_avg_ms: decomposition.d_avg_s * 1000.0,
        c_avg_norm: decomposition.c_avg_norm,
        confidence_latency_s: delta_norm * mean_duration_s,
        rtf: rtf(total_compute_ms, total_audio_ms)?,
        wer: corpus_wer(&wer_pairs, true)?,
        confidence_latency_norm: delta_norm,
        u_avg_norm: decomposition.u_avg_norm,
        clamped,
        matched_words: decomposition.matched_words,
        skipped_words: decomposition.skipped_words,
    })
}

/// Report format: `key=value` per line, headline keys first.
pub fn format_metrics_report(m: &SessionMetrics) -> String {
    format!(
        "d_avg_ms={:.3}\nrtf={:.6}\nc_avg_norm={:.6}\nconfidence_latency_s={:.3}\nwer={:.6}\n\
         confidence_latency_norm={:.6}\nu_avg_norm={:.6}\nclamped={}\nmatched_words={}\nskipped_words={}\n",
        m.d_avg_ms,
        m.rtf,
        m.c_avg_norm,
        m.confidence_latency_s,
        m.wer,
        m.confidence_latency_norm,
        m.u_avg_norm,
        m.clamped,
        m.matched_words,
        m.skipped_words
    )
}

// ── Chart file ──────────────────────────────────────────────────────────────

pub fn format_chart(chart: &ConversionChart) -> String {
    let mut out = format!("# delta\tu_avg_shifted\tu_avg_unclamped (u_avg={})\n", chart.u_avg);
    for i in 0..chart.delta_grid.len() {
        out.push_str(&format!(
            "{}\t{}\t{}\n",
            chart.delta_grid[i], chart.u_avg_shifted[i], chart.u_avg_unclamped[i]
        ));
    }
    out
}

pub fn parse_chart(name: &str, text: &str) -> Result<ConversionChart> {
    let mut delta_grid = Vec::new();
    let mut u_avg_shifted = Vec::new();
    let mut u_avg_unclamped = Vec::new();
    let mut u_avg = None;
    for (idx, line) in text.lines().enumerate() {
        if let Some(rest) = line.split_once("u_avg=").map(|(_, r)| r) {
            if line.starts_with('#') {
                let v = rest.trim_end_matches(')');
                u_avg = Some(
                    v.parse()
                        .map_err(|_| Error::parse(name, idx + 1, format!("bad u_avg `{v}`")))?,
                );
                continue;
            }
        }
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split('\t').collect();
        if parts.len() != 3 {
            return Err(Error::parse(name, idx + 1, "expected 3 tab-separated columns"));
        }
        let parse = |v: &str| -> Result<f64> {
            v.parse()
                .map_err(|_| Error::parse(name, idx + 1, format!("bad float `{v}`")))
        };
        delta_grid.push(parse(parts[0])?);
        u_avg_shifted.push(parse(parts[1])?);
        u_avg_unclamped.push(parse(parts[2])?);
    }
    if delta_grid.is_empty() {
        return Err(Error::EmptyInput("chart"));
    }
    let u_avg = u_avg.unwrap_or(u_avg_unclamped[0] - delta_grid[0]);
    Ok(ConversionChart {
        delta_grid,
        u_avg_shifted,
        u_avg_unclamped,
        u_avg,
    })
}

// ── Trade-off sweep ─────────────────────────────────────────────────────────

#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub delta_threshold_ms: f64,
    pub confidence_latency_s: f64,
    pub confidence_latency_norm: f64,
    pub wer: f64,
    pub d_avg_ms: f64,
    pub rtf: f64,
}

/// Run combined-detection sessions over a corpus at each delta threshold and
/// collect one latency/accuracy point per threshold.
pub fn tradeoff_sweep(
    corpus: &Corpus,
    base: &SessionConfig,
    delta_thresholds: &[f64],
) -> Result<Vec<SweepPoint>> {
    if delta_thresholds.is_empty() {
        return Err(Error::EmptyInput("delta thresholds"));
    }
    let scorer = build_scorer(&corpus.scorer_spec, &corpus.vocab, corpus.dim)?;
    let references: HashMap<String, Vec<String>> = corpus
        .utterances
        .iter()
        .map(|u| (u.id.clone(), u.reference_words.clone()))
        .collect();
    let durations_s: HashMap<String, f64> = corpus
        .utterances
        .iter()
        .map(|u| (u.id.clone(), u.stream.duration_ms() / 1000.0))
        .collect();
    let mean_duration_s = durations_s.values().sum::<f64>() / durations_s.len().max(1) as f64;
    let grid = default_delta_grid(mean_duration_s);
    let chart = build_conversion_chart(&corpus.alignments, &durations_s, &grid)?;

    let mut points = Vec::with_capacity(delta_thresholds.len());
    for &threshold in delta_thresholds {
        let config = SessionConfig {
            detector_mode: DetectorMode::Combined,
            delta_threshold_ms: threshold,
            ..base.clone()
        };
        let mut sessions = Vec::with_capacity(corpus.utterances.len());
        for u in &corpus.utterances {
            let clock = crate::clock::SimClock::new();
            let result = run_session(&u.stream, &config, scorer.as_ref(), &corpus.vocab, &clock)?;
            sessions.push(LoggedSession {
                utt: u.id.clone(),
                result,
            });
        }
        let m = corpus_metrics(&sessions, &corpus.alignments, &references, Some(&chart))?;
        points.push(SweepPoint {
            delta_threshold_ms: threshold,
            confidence_latency_s: m.confidence_latency_s,
            confidence_latency_norm: m.confidence_latency_norm,
            wer: m.wer,
            d_avg_ms: m.d_avg_ms,
            rtf: m.rtf,
        });
    }
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;

    // ── word_latency ────────────────────────────────────────────────────

    #[test]
    fn latency_is_direct_substitution() {
        assert!((word_latency(0.9, 1.2, 0.3, 0.0) - 0.6).abs() < 1e-12);
        assert_eq!(word_latency(1.0, 1.0, 0.0, 0.0), 0.0);
        // transmission term defaults to zero upstream but participates
        assert!((word_latency(0.9, 1.2, 0.3, 0.1) - 0.7).abs() < 1e-12);
    }

    // ── chart ───────────────────────────────────────────────────────────

    fn chart_from_ends(ends: &[f64], grid: &[f64]) -> ConversionChart {
        let alignments: Vec<WordAlignment> = ends
            .iter()
            .enumerate()
            .map(|(i, &e)| WordAlignment {
                utt: "u0".into(),
                word: format!("w{i}"),
                start_s: 0.0,
                end_s: e,
            })
            .collect();
        let mut durations = HashMap::new();
        durations.insert("u0".to_string(), 1.0);
        build_conversion_chart(&alignments, &durations, grid).unwrap()
    }

    #[test]
    fn chart_mean_and_shift() {
        let chart = chart_from_ends(&[0.2, 0.5, 0.8], &[0.0, 0.1]);
        assert!((chart.u_avg - 0.5).abs() < 1e-12);
        assert!((chart.u_avg_shifted[0] - 0.5).abs() < 1e-12);
        assert!((chart.u_avg_shifted[1] - 0.6).abs() < 1e-12);
    }

    #[test]
    fn chart_linearity_before_clamping() {
        let chart = chart_from_ends(&[0.1, 0.4, 0.7], &[0.0, 0.1, 0.2]);
        for (i, &d) in chart.delta_grid.iter().enumerate() {
            assert!((chart.u_avg_unclamped[i] - (chart.u_avg + d)).abs() < 1e-12);
        }
        // steps of exactly 0.1 in the unclamped values
        assert!((chart.u_avg_unclamped[1] - chart.u_avg_unclamped[0] - 0.1).abs() < 1e-12);
    }

    #[test]
    fn chart_clamps_at_utterance_end() {
        let chart = chart_from_ends(&[0.5, 0.9], &[0.0, 0.2, 0.6]);
        // at delta 0.2 the 0.9 word saturates: (0.7 + 1.0)/2
        assert!((chart.u_avg_shifted[1] - 0.85).abs() < 1e-12);
        // shifted values never exceed 1
        assert!(chart.u_avg_shifted.iter().all(|&v| v <= 1.0 + 1e-12));
        // monotone in delta
        assert!(chart.u_avg_shifted.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn confidence_latency_inverts_chart() {
        let grid: Vec<f64> = (0..21).map(|i| i as f64 * 0.02).collect();
        let chart = chart_from_ends(&[0.2, 0.3, 0.5], &grid);
        // fixed point: c_avg = u_avg -> delta 0
        let (d, clamped) = confidence_latency(chart.u_avg, &chart);
        assert!(d.abs() < 1e-12);
        assert!(!clamped);
        // interior inversion
        let target = chart.u_avg + 0.15;
        let (d, clamped) = confidence_latency(target, &chart);
        assert!((d - 0.15).abs() < 0.02 + 1e-12);
        assert!(!clamped);
        // clamping below and above
        let (d, clamped) = confidence_latency(0.0, &chart);
        assert_eq!(d, 0.0);
        assert!(clamped);
        let (d, clamped) = confidence_latency(2.0, &chart);
        assert!((d - 0.4).abs() < 1e-12);
        assert!(clamped);
    }

    #[test]
    fn chart_rejects_bad_input() {
        let mut durations = HashMap::new();
        durations.insert("u0".to_string(), 0.0);
        let alignments = vec![WordAlignment {
            utt: "u0".into(),
            word: "w".into(),
            start_s: 0.0,
            end_s: 0.0,
        }];
        assert!(build_conversion_chart(&alignments, &durations, &[0.0, 0.1]).is_err());
        let chart = chart_from_ends(&[0.5], &[0.0, 0.1]);
        assert_eq!(chart.delta_grid.len(), 2);
        assert!(build_conversion_chart(&[], &durations, &[0.0]).is_err());
    }

    #[test]
    fn chart_file_round_trip() {
        let chart = chart_from_ends(&[0.25, 0.5], &[0.0, 0.1, 0.2]);
        let text = format_chart(&chart);
        let back = parse_chart("mem", &text).unwrap();
        assert_eq!(back, chart);
    }

    // ── rtf ─────────────────────────────────────────────────────────────

    #[test]
    fn rtf_is_compute_over_audio() {
        assert!((rtf(100.0, 1000.0).unwrap() - 0.1).abs() < 1e-12);
        assert_eq!(rtf(0.0, 1000.0).unwrap(), 0.0);
        assert!((rtf(500.0, 500.0).unwrap() - 1.0).abs() < 1e-12);
        assert!(rtf(1.0, 0.0).is_err());
    }

    // ── wer ─────────────────────────────────────────────────────────────

    fn words(s: &str) -> Vec<String> {
        s.split_whitespace().map(|w| w.to_string()).collect()
    }

    #[test]
    fn wer_hand_computed() {
        // 1 substitution + 1 deletion over 4 reference words
        assert!((wer(&words("a b c d"), &words("a x c")).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(wer(&words("a b"), &words("a b")).unwrap(), 0.0);
        assert!(wer(&[], &words("a")).is_err());
    }

    #[test]
    fn wer_case_normalization() {
        let r = words("Hello World");
        let h = words("hello world");
        assert!(wer(&r, &h).unwrap() > 0.0);
        assert_eq!(
            corpus_wer(&[(r, h)], true).unwrap(),
            0.0
        );
    }

    // ── decomposition ───────────────────────────────────────────────────

    use crate::pipeline::{CommitRecord, StepRecord};
    use crate::stability::DetectorKind;

    fn toy_session(commit_words: &[(&str, f64, usize)], steps: &[f64], dur_ms: f64) -> SessionResult {
        // one commit per entry: (word, audio_consumed_ms, step_index)
        SessionResult {
            commits: commit_words
                .iter()
                .map(|(w, audio, step)| CommitRecord {
                    tokens: vec![1],
                    words: vec![w.to_string()],
                    commit_wall_ms: *audio,
                    audio_consumed_ms: *audio,
                    detector: DetectorKind::SharedPrefix,
                    step_index: *step,
                })
                .collect(),
            final_tokens: vec![1; commit_words.len()],
            final_words: commit_words.iter().map(|(w, _, _)| w.to_string()).collect(),
            steps: steps
                .iter()
                .enumerate()
                .map(|(i, &c)| StepRecord {
                    compute_ms: c,
                    audio_end_ms: (i + 1) as f64 * 300.0,
                    persistence: 1,
                })
                .collect(),
            audio_duration_ms: dur_ms,
        }
    }

    #[test]
    fn single_word_at_audio_end() {
        let result = toy_session(&[("kato", 1000.0, 0)], &[0.0], 1000.0);
        let alignments = vec![WordAlignment {
            utt: "u0".into(),
            word: "kato".into(),
            start_s: 0.0,
            end_s: 0.6,
        }];
        let d = session_latency_decomposition("u0", &result, &alignments).unwrap();
        assert!((d.c_avg_norm - 1.0).abs() < 1e-12);
        assert_eq!(d.d_avg_s, 0.0);
        assert!((d.mean_latency_s - 0.4).abs() < 1e-12);
    }

    #[test]
    fn words_committed_at_their_end_have_zero_latency() {
        let result = toy_session(&[("a", 400.0, 0), ("b", 800.0, 1)], &[0.0, 0.0], 1000.0);
        let alignments = vec![
            WordAlignment { utt: "u0".into(), word: "a".into(), start_s: 0.0, end_s: 0.4 },
            WordAlignment { utt: "u0".into(), word: "b".into(), start_s: 0.4, end_s: 0.8 },
        ];
        let d = session_latency_decomposition("u0", &result, &alignments).unwrap();
        assert!(d.mean_latency_s.abs() < 1e-12);
    }

    #[test]
    fn decomposition_matches_identity() {
        let result = toy_session(
            &[("a", 300.0, 0), ("b", 600.0, 1), ("c", 900.0, 2)],
            &[12.0, 7.0, 3.0],
            1200.0,
        );
        let alignments = vec![
            WordAlignment { utt: "u0".into(), word: "a".into(), start_s: 0.0, end_s: 0.25 },
            WordAlignment { utt: "u0".into(), word: "b".into(), start_s: 0.25, end_s: 0.5 },
            WordAlignment { utt: "u0".into(), word: "c".into(), start_s: 0.5, end_s: 0.8 },
        ];
        let (records, stats) = collect_word_latencies("u0", &result, &alignments).unwrap();
        let d = decompose(&records, stats.unmatched).unwrap();
        // naive per-word loop
        let naive: f64 = records
            .iter()
            .map(|r| word_latency(r.u_s, r.c_s, r.d_s, 0.0))
            .sum::<f64>()
            / records.len() as f64;
        assert!((d.mean_latency_s - naive).abs() < 1e-9);
        assert!((d.mean_latency_s - (d.d_avg_s + d.c_avg_s - d.u_avg_s)).abs() < 1e-12);
    }

    #[test]
    fn mismatch_beyond_tolerance_errors() {
        let result = toy_session(&[("xxx", 400.0, 0), ("yyy", 800.0, 0)], &[0.0], 1000.0);
        let alignments = vec![
            WordAlignment { utt: "u0".into(), word: "a".into(), start_s: 0.0, end_s: 0.4 },
            WordAlignment { utt: "u0".into(), word: "b".into(), start_s: 0.4, end_s: 0.8 },
        ];
        match session_latency_decomposition("u0", &result, &alignments) {
            Err(Error::WordMatch(msg)) => assert!(msg.contains("unmatched")),
            other => panic!("expected WordMatch error, got {other:?}"),
        }
    }

    #[test]
    fn empty_commits_error() {
        let result = SessionResult {
            audio_duration_ms: 1000.0,
            ..SessionResult::default()
        };
        assert!(session_latency_decomposition("u0", &result, &[]).is_err());
    }

    #[test]
    fn ctm_round_trip_and_validation() {
        let alignments = vec![
            WordAlignment { utt: "u0".into(), word: "kato".into(), start_s: 0.0, end_s: 0.24 },
            WordAlignment { utt: "u1".into(), word: "mira".into(), start_s: 0.08, end_s: 0.4 },
        ];
        let text = format_ctm(&alignments);
        let back = parse_ctm("mem", &text).unwrap();
        assert_eq!(back, alignments);
        assert!(parse_ctm("mem", "u0 w 0.5 0.2\n").is_err());
        assert!(parse_ctm("mem", "u0 w 0.5\n").is_err());
    }

    // ── sweep ───────────────────────────────────────────────────────────

    #[test]
    fn infinite_threshold_point_matches_shared_only_run() {
        use crate::clock::SimClock;
        use crate::pipeline::LoggedSession;
        use crate::scoring::build_scorer;
        use crate::synthesis::{generate_corpus, make_vocab};
        use std::sync::Arc;

        // single-utterance corpus, single threshold: the sweep point must
        // equal a manual shared-only run through the metrics pipeline
        let vocab = Arc::new(make_vocab(16).unwrap());
        let corpus = generate_corpus(321, 1, &vocab, (3, 5), 4).unwrap();
        let base = SessionConfig::default();
        let points = tradeoff_sweep(&corpus, &base, &[f64::INFINITY]).unwrap();
        assert_eq!(points.len(), 1);

        let scorer = build_scorer(&corpus.scorer_spec, &corpus.vocab, corpus.dim).unwrap();
        let clock = SimClock::new();
        let u = &corpus.utterances[0];
        let result = run_session(&u.stream, &base, scorer.as_ref(), &corpus.vocab, &clock).unwrap();
        let sessions = vec![LoggedSession {
            utt: u.id.clone(),
            result,
        }];
        let mut references = HashMap::new();
        references.insert(u.id.clone(), u.reference_words.clone());
        let manual = corpus_metrics(&sessions, &corpus.alignments, &references, None).unwrap();

        assert!((points[0].confidence_latency_s - manual.confidence_latency_s).abs() < 1e-9);
        assert!((points[0].wer - manual.wer).abs() < 1e-12);
        assert!((points[0].d_avg_ms - manual.d_avg_ms).abs() < 1e-9);
    }

    #[test]
    fn offline_style_log_has_unit_commit_position() {
        use crate::clock::SimClock;
        use crate::config::DetectorMode;
        use crate::scoring::build_scorer;
        use crate::synthesis::{generate_corpus, make_vocab};
        use std::sync::Arc;

        // endpoint-only detection with an infinite threshold never commits
        // mid-stream, so every word commits at the flush: c_avg_norm is 1
        let vocab = Arc::new(make_vocab(16).unwrap());
        let corpus = generate_corpus(654, 2, &vocab, (2, 4), 4).unwrap();
        let scorer = build_scorer(&corpus.scorer_spec, &corpus.vocab, corpus.dim).unwrap();
        let config = SessionConfig {
            detector_mode: DetectorMode::EndpointOnly,
            delta_threshold_ms: f64::INFINITY,
            ..SessionConfig::default()
        };
        for u in &corpus.utterances {
            let clock = SimClock::new();
            let result =
                run_session(&u.stream, &config, scorer.as_ref(), &corpus.vocab, &clock).unwrap();
            assert!(result.commits.iter().all(|c| c.detector
                == crate::stability::DetectorKind::Flush));
            let d = session_latency_decomposition(&u.id, &result, &corpus.alignments).unwrap();
            assert!((d.c_avg_norm - 1.0).abs() < 1e-12);
        }
    }

    proptest::proptest! {
        // edit distance agrees with a simple recursive oracle on tiny inputs
        #[test]
        fn edit_distance_matches_recursive_oracle(
            a in proptest::collection::vec(0u8..3, 0..6),
            b in proptest::collection::vec(0u8..3, 0..6),
        ) {
            fn rec(a: &[u8], b: &[u8]) -> usize {
                if a.is_empty() { return b.len(); }
                if b.is_empty() { return a.len(); }
                let cost = usize::from(a[0] != b[0]);
                (rec(&a[1..], b) + 1)
                    .min(rec(a, &b[1..]) + 1)
                    .min(rec(&a[1..], &b[1..]) + cost)
            }
            let aw: Vec<String> = a.iter().map(|x| x.to_string()).collect();
            let bw: Vec<String> = b.iter().map(|x| x.to_string()).collect();
            proptest::prop_assert_eq!(edit_distance(&aw, &bw), rec(&a, &b));
        }

        // inversion within one grid step anywhere in the increasing interior
        #[test]
        fn chart_inversion_property(delta in 0.01f64..0.38) {
            let grid: Vec<f64> = (0..41).map(|i| i as f64 * 0.01).collect();
            let chart = chart_from_ends(&[0.2, 0.35, 0.55], &grid);
            let ends = [0.2, 0.35, 0.55];
            let value: f64 =
                ends.iter().map(|&u| (u + delta).min(1.0)).sum::<f64>() / ends.len() as f64;
            let (d, _) = confidence_latency(value, &chart);
            proptest::prop_assert!((d - delta).abs() <= 0.01 + 1e-9);
        }
    }
}
