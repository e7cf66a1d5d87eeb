//! Simulation clock.
//!
//! Time is kept as a whole number of microseconds. Scenario files and the
//! public API speak seconds; quantizing on the way in removes floating-point
//! tie ambiguity from the event order, so a run replays identically on any
//! platform.

use std::fmt;
use std::ops::{Add, AddAssign, Sub};

pub const MICROS_PER_SEC: f64 = 1_000_000.0;

/// An instant (or span) of simulated time, in whole microseconds.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct SimTime(u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    /// Quantizes a non-negative number of seconds to the nearest microsecond.
    pub fn from_secs(secs: f64) -> SimTime {
        assert!(
            secs.is_finite() && secs >= 0.0,
            "time must be a finite non-negative number of seconds, got {secs}"
        );
        SimTime((secs * MICROS_PER_SEC).round() as u64)
    }

    pub const fn from_micros(micros: u64) -> SimTime {
        SimTime(micros)
    }

    pub fn as_secs(self) -> f64 {
        self.0 as f64 / MICROS_PER_SEC
    }

    pub const fn as_micros(self) -> u64 {
        self.0
    }

    pub fn saturating_sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(rhs.0))
    }
}

impl Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl AddAssign for SimTime {
    fn add_assign(&mut self, rhs: SimTime) {
        self.0 += rhs.0;
    }
}

impl Sub for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: SimTime) -> SimTime {
        assert!(self.0 >= rhs.0, "time subtraction would go negative");
        SimTime(self.0 - rhs.0)
    }
}

impl fmt::Debug for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.6}s", self.as_secs())
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.6}", self.as_secs())
    }
}
