//! Time sources. Synthesis reads time only through [`Clock`] so tests can
//! drive timeouts deterministically.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

pub trait Clock: Send + Sync {
    /// Time elapsed since the clock was created.
    fn now(&self) -> Duration;
}

pub struct SystemClock {
    start: Instant,
}

impl SystemClock {
    pub fn new() -> Self {
        SystemClock { start: Instant::now() }
    }
}

impl Default for SystemClock {
    fn default() -> Self {
        SystemClock::new()
    }
}

impl Clock for SystemClock {
    fn now(&self) -> Duration {
        self.start.elapsed()
    }
}

/// A clock that only moves when told to, optionally by a fixed step on every
/// read.
#[derive(Default)]
pub struct ManualClock {
    nanos: AtomicU64,
    step: u64,
}

impl ManualClock {
    pub fn new() -> Self {
        ManualClock::default()
    }

    pub fn ticking(step: Duration) -> Self {
        ManualClock { nanos: AtomicU64::new(0), step: step.as_nanos() as u64 }
    }

    pub fn advance(&self, d: Duration) {
        self.nanos.fetch_add(d.as_nanos() as u64, Ordering::SeqCst);
    }
}

impl Clock for ManualClock {
    fn now(&self) -> Duration {
        Duration::from_nanos(self.nanos.fetch_add(self.step, Ordering::SeqCst))
    }
}

/// A point in time on a particular clock.
#[derive(Clone)]
pub struct Deadline {
    pub clock: Arc<dyn Clock>,
    pub at: Duration,
}

impl Deadline {
    pub fn after(clock: Arc<dyn Clock>, d: Duration) -> Self {
        let at = clock.now() + d;
        Deadline { clock, at }
    }

    pub fn expired(&self) -> bool {
        self.clock.now() >= self.at
    }
}

impl std::fmt::Debug for Deadline {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Deadline").field("at", &self.at).finish()
    }
}
