//! Session configuration.

use crate::error::{Error, Result};

/// Which stability condition(s) a session uses to commit prefixes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetectorMode {
    SharedOnly,
    EndpointOnly,
    Combined,
}

/// How session time flows: deterministic simulated time (chunk cadence plus
/// a per-score compute cost) or the real monotonic clock.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeMode {
    Simulated,
    Wall,
}

#[derive(Debug, Clone)]
pub struct SessionConfig {
    pub chunk_ms: f64,
    pub beam_size: usize,
    pub detector_mode: DetectorMode,
    pub delta_threshold_ms: f64,
    pub attention_mass_threshold: f64,
    pub max_output_tokens: usize,
    /// Rank hypotheses by per-token mean instead of the raw score sum.
    pub length_norm: bool,
    pub time_mode: TimeMode,
    /// Simulated compute cost charged per scorer call (simulated time only).
    pub sim_score_cost_ms: f64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            chunk_ms: 300.0,
            beam_size: 8,
            detector_mode: DetectorMode::SharedOnly,
            delta_threshold_ms: 500.0,
            attention_mass_threshold: 0.95,
            max_output_tokens: 256,
            length_norm: false,
            time_mode: TimeMode::Simulated,
            sim_score_cost_ms: 1.0,
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.chunk_ms > 0.0) || !self.chunk_ms.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "chunk_ms must be positive, got {}",
                self.chunk_ms
            )));
        }
        if self.beam_size == 0 {
            return Err(Error::InvalidConfig("beam_size must be >= 1".into()));
        }
        if !(self.attention_mass_threshold > 0.0 && self.attention_mass_threshold <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "attention_mass_threshold must lie in (0, 1], got {}",
                self.attention_mass_threshold
            )));
        }
        if self.delta_threshold_ms < 0.0 || self.delta_threshold_ms.is_nan() {
            return Err(Error::InvalidConfig(format!(
                "delta_threshold_ms must be non-negative, got {}",
                self.delta_threshold_ms
            )));
        }
        if self.max_output_tokens == 0 {
            return Err(Error::InvalidConfig("max_output_tokens must be >= 1".into()));
        }
        if self.sim_score_cost_ms < 0.0 || !self.sim_score_cost_ms.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "sim_score_cost_ms must be non-negative, got {}",
                self.sim_score_cost_ms
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = SessionConfig::default();
        c.validate().unwrap();
        assert_eq!(c.chunk_ms, 300.0);
        assert_eq!(c.beam_size, 8);
        assert_eq!(c.attention_mass_threshold, 0.95);
    }

    #[test]
    fn infinite_delta_threshold_is_allowed() {
        let c = SessionConfig {
            delta_threshold_ms: f64::INFINITY,
            ..SessionConfig::default()
        };
        c.validate().unwrap();
    }

    #[test]
    fn bad_values_rejected() {
        for cfg in [
            SessionConfig { chunk_ms: 0.0, ..Default::default() },
            SessionConfig { beam_size: 0, ..Default::default() },
            SessionConfig { attention_mass_threshold: 0.0, ..Default::default() },
            SessionConfig { attention_mass_threshold: 1.5, ..Default::default() },
            SessionConfig { delta_threshold_ms: -1.0, ..Default::default() },
            SessionConfig { max_output_tokens: 0, ..Default::default() },
        ] {
            assert!(cfg.validate().is_err());
        }
    }
}
