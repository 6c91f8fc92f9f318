//! Injectable monotonic time source.
//!
//! Sessions measure per-step compute through a [`Clock`] so that simulated
//! runs and tests produce identical timing without touching the system clock.

use std::cell::Cell;
use std::time::Instant;

/// Monotonic time source. Simulated clocks additionally honor the advance
/// calls; real clocks ignore them and just report elapsed time.
pub trait Clock: Send {
    fn now_ms(&self) -> f64;

    /// Advance simulated time by `ms`. No-op on real clocks.
    fn advance_ms(&self, _ms: f64) {}

    /// Move simulated time forward to at least `t_ms`. No-op on real clocks.
    fn advance_to_ms(&self, _t_ms: f64) {}
}

/// Wall clock, measured from construction.
pub struct SystemClock {
    start: Instant,
}

impl SystemClock {
    pub fn new() -> Self {
        Self {
            start: Instant::now(),
        }
    }
}

impl Default for SystemClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for SystemClock {
    fn now_ms(&self) -> f64 {
        self.start.elapsed().as_secs_f64() * 1000.0
    }
}

/// Deterministic clock for simulated-time sessions and tests. Time moves
/// only when explicitly advanced.
pub struct SimClock {
    t: Cell<f64>,
}

impl SimClock {
    pub fn new() -> Self {
        Self { t: Cell::new(0.0) }
    }

    pub fn starting_at(t_ms: f64) -> Self {
        Self { t: Cell::new(t_ms) }
    }
}

impl Default for SimClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for SimClock {
    fn now_ms(&self) -> f64 {
        self.t.get()
    }

    fn advance_ms(&self, ms: f64) {
        self.t.set(self.t.get() + ms);
    }

    fn advance_to_ms(&self, t_ms: f64) {
        if t_ms > self.t.get() {
            self.t.set(t_ms);
        }
    }
}
