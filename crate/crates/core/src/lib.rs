//! Streaming incremental decoder with prefix-stability commits, plus the
//! measurement side: latency decomposition, confidence-latency conversion
//! charts, WER, and latency/accuracy trade-off sweeps.
//!
//! The pipeline loop is: wait for a feature chunk, extend the committed
//! stable prefix over all audio received so far, run stability detection on
//! the resulting beam, and commit whatever prefix the detector certifies.
//! Scorers are pluggable; a deterministic synthetic scorer plus a matching
//! corpus generator make every part of the system testable without trained
//! models or audio data.

pub mod clock;
pub mod config;
pub mod error;
pub mod features;
pub mod hyp;
pub mod ioutil;
pub mod metrics;
pub mod pipeline;
pub mod scoring;
pub mod search;
pub mod stability;
pub mod synthesis;
pub mod vocab;

pub use clock::{Clock, SimClock, SystemClock};
pub use config::{DetectorMode, SessionConfig, TimeMode};
pub use error::{Error, Result};
pub use features::{chunk_stream, Chunk, FeatureFrame, FeatureStream};
pub use hyp::{Beam, Hypothesis, TokenId};
pub use scoring::{
    build_scorer, build_synthetic_scorer, corrupt_scorer, ensemble_combine, Scorer, ScorerSpec,
    StepScore,
};
pub use search::{beam_extend, beam_search_offline, IncrementalSession};
pub use stability::{detect, estimate_endpoint, reliable_prefix, shared_prefix, DetectorKind};
pub use pipeline::{run_session, CommitRecord, SessionResult};
pub use vocab::Vocabulary;
