//! Feature frames, streams and chunking.
//!
//! The engine consumes precomputed feature vectors; there is no signal
//! processing here. A [`FeatureStream`] is an ordered list of equally sized
//! frames with a fixed frame period, and [`chunk_stream`] partitions it into
//! the fixed-length chunks a streaming session receives.

use crate::error::{Error, Result};

/// One feature vector with its ordinal position in the stream.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureFrame {
    pub values: Vec<f64>,
    pub index: usize,
}

/// An ordered, consecutively indexed list of frames.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStream {
    frames: Vec<FeatureFrame>,
    frame_period_ms: f64,
    dim: usize,
}

impl FeatureStream {
    pub fn new(dim: usize, frame_period_ms: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidConfig("feature dim must be positive".into()));
        }
        if !(frame_period_ms > 0.0) || !frame_period_ms.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "frame_period_ms must be positive, got {frame_period_ms}"
            )));
        }
        Ok(Self {
            frames: Vec::new(),
            frame_period_ms,
            dim,
        })
    }

    pub fn from_rows(dim: usize, frame_period_ms: f64, rows: Vec<Vec<f64>>) -> Result<Self> {
        let mut stream = Self::new(dim, frame_period_ms)?;
        for row in rows {
            stream.push_row(row)?;
        }
        Ok(stream)
    }

    /// Append one frame; the index is assigned consecutively.
    pub fn push_row(&mut self, values: Vec<f64>) -> Result<()> {
        if values.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "non-finite feature value in frame {}",
                self.frames.len()
            )));
        }
        let index = self.frames.len();
        self.frames.push(FeatureFrame { values, index });
        Ok(())
    }

    /// Append frames coming from a chunk, checking index continuity.
    pub fn extend_from_frames(&mut self, frames: &[FeatureFrame]) -> Result<()> {
        for frame in frames {
            if frame.index != self.frames.len() {
                return Err(Error::OutOfOrderChunk {
                    got: frame.index,
                    expected: self.frames.len(),
                });
            }
            if frame.values.len() != self.dim {
                return Err(Error::DimensionMismatch {
                    expected: self.dim,
                    got: frame.values.len(),
                });
            }
            self.frames.push(frame.clone());
        }
        Ok(())
    }

    pub fn frames(&self) -> &[FeatureFrame] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn frame_period_ms(&self) -> f64 {
        self.frame_period_ms
    }

    pub fn duration_ms(&self) -> f64 {
        self.frames.len() as f64 * self.frame_period_ms
    }

    /// A copy containing only the first `n_frames` frames.
    pub fn prefix(&self, n_frames: usize) -> FeatureStream {
        FeatureStream {
            frames: self.frames[..n_frames.min(self.frames.len())].to_vec(),
            frame_period_ms: self.frame_period_ms,
            dim: self.dim,
        }
    }
}

/// A contiguous slice of a stream handed to a session, or the final flush
/// marker (empty, `flush = true`).
#[derive(Debug, Clone)]
pub struct Chunk {
    pub frames: Vec<FeatureFrame>,
    pub arrival_wall_ms: f64,
    /// Stream time covered through the end of this chunk.
    pub audio_end_ms: f64,
    pub flush: bool,
}

/// Partition a stream into chunks of `chunk_ms` (rounded down to whole
/// frames) and append the flush marker. Concatenating the chunk frames
/// reproduces the stream exactly.
pub fn chunk_stream(stream: &FeatureStream, chunk_ms: f64) -> Result<Vec<Chunk>> {
    if !(chunk_ms > 0.0) || !chunk_ms.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "chunk_ms must be positive, got {chunk_ms}"
        )));
    }
    let per = stream.frame_period_ms();
    let frames_per_chunk = (chunk_ms / per).floor() as usize;
    if frames_per_chunk == 0 {
        return Err(Error::ChunkTooShort {
            chunk_ms,
            frame_period_ms: per,
        });
    }
    let mut chunks = Vec::new();
    let mut consumed = 0usize;
    while consumed < stream.len() {
        let end = (consumed + frames_per_chunk).min(stream.len());
        let frames = stream.frames()[consumed..end].to_vec();
        let audio_end_ms = end as f64 * per;
        chunks.push(Chunk {
            frames,
            arrival_wall_ms: audio_end_ms,
            audio_end_ms,
            flush: false,
        });
        consumed = end;
    }
    chunks.push(Chunk {
        frames: Vec::new(),
        arrival_wall_ms: stream.duration_ms(),
        audio_end_ms: stream.duration_ms(),
        flush: true,
    });
    Ok(chunks)
}

// ── Feature file format ─────────────────────────────────────────────────────
//
// Line 1: `dim=<d> frame_period_ms=<p>`; every following line holds `d`
// space-separated decimal floats. Parsing does not depend on the locale.

pub fn parse_features(name: &str, text: &str) -> Result<FeatureStream> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::parse(name, 1, "empty feature file"))?;
    let mut dim: Option<usize> = None;
    let mut period: Option<f64> = None;
    for field in header.split_whitespace() {
        match field.split_once('=') {
            Some(("dim", v)) => {
                dim = Some(v.parse().map_err(|_| Error::parse(name, 1, format!("bad dim `{v}`")))?)
            }
            Some(("frame_period_ms", v)) => {
                period = Some(
                    v.parse()
                        .map_err(|_| Error::parse(name, 1, format!("bad frame_period_ms `{v}`")))?,
                )
            }
            _ => return Err(Error::parse(name, 1, format!("unexpected header field `{field}`"))),
        }
    }
    let dim = dim.ok_or_else(|| Error::parse(name, 1, "missing dim"))?;
    let period = period.ok_or_else(|| Error::parse(name, 1, "missing frame_period_ms"))?;
    let mut stream = FeatureStream::new(dim, period)
        .map_err(|e| Error::parse(name, 1, e.to_string()))?;
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let mut row = Vec::with_capacity(dim);
        for tok in line.split_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|_| Error::parse(name, idx + 1, format!("bad float `{tok}`")))?;
            row.push(v);
        }
        if row.len() != dim {
            return Err(Error::parse(
                name,
                idx + 1,
                format!("expected {dim} values, got {}", row.len()),
            ));
        }
        stream
            .push_row(row)
            .map_err(|e| Error::parse(name, idx + 1, e.to_string()))?;
    }
    Ok(stream)
}

pub fn format_features(stream: &FeatureStream) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "dim={} frame_period_ms={}\n",
        stream.dim(),
        stream.frame_period_ms()
    ));
    for frame in stream.frames() {
        let row: Vec<String> = frame.values.iter().map(|v| format!("{v}")).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}
