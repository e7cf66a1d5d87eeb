//! Sensor traffic generation.
//!
//! Sensors take a measurement on a fixed period and transmit a decimated
//! subset of them: every seventh measurement in normal operation, every
//! third while an alarm window is active. Which decimation applies is
//! decided at the instant of the measurement, so switching modes never
//! drops or doubles an emission. A constant-interval override replaces the
//! whole mechanism for parameter sweeps.

use serde::{Deserialize, Serialize};

use crate::scenario::NodeId;
use crate::time::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlarmWindow {
    pub node: NodeId,
    pub start_s: f64,
    pub duration_s: f64,
}

impl AlarmWindow {
    pub fn contains(&self, t_s: f64) -> bool {
        t_s >= self.start_s && t_s < self.start_s + self.duration_s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficConfig {
    pub measurement_period_s: f64,
    /// Send every n-th measurement in normal operation.
    pub normal_decimation: u32,
    /// Send every n-th measurement while in alarm.
    pub alarm_decimation: u32,
    pub payload_bits: u64,
    pub alarm_windows: Vec<AlarmWindow>,
    /// Replaces measurement-driven emission with a fixed interval.
    pub constant_interval_s: Option<f64>,
    /// Draw a per-node phase offset from the run seed instead of starting
    /// every source at t = 0.
    pub phase_offsets: bool,
}

impl Default for TrafficConfig {
    fn default() -> TrafficConfig {
        TrafficConfig {
            measurement_period_s: 6.0,
            normal_decimation: 7,
            alarm_decimation: 3,
            payload_bits: 420,
            alarm_windows: Vec::new(),
            constant_interval_s: None,
            phase_offsets: true,
        }
    }
}

impl TrafficConfig {
    pub fn alarm_active(&self, node: NodeId, t: SimTime) -> bool {
        let t_s = t.as_secs();
        self.alarm_windows
            .iter()
            .any(|w| w.node == node && w.contains(t_s))
    }

    /// Decimation in force for `node` at instant `t`.
    pub fn decimation_at(&self, node: NodeId, t: SimTime) -> u32 {
        if self.alarm_active(node, t) {
            self.alarm_decimation
        } else {
            self.normal_decimation
        }
    }

    /// Emission interval while a mode holds steady.
    pub fn steady_interval_s(&self, alarm: bool) -> f64 {
        match self.constant_interval_s {
            Some(i) => i,
            None => {
                let dec = if alarm {
                    self.alarm_decimation
                } else {
                    self.normal_decimation
                };
                self.measurement_period_s * dec as f64
            }
        }
    }

    /// Upper bound for drawing phase offsets: one full emission cycle.
    pub fn phase_span_s(&self) -> f64 {
        self.steady_interval_s(false)
    }
}

/// Alarm windows of `window_s` seconds opening at every whole simulated hour
/// for each listed node.
pub fn alarm_hourly_schedule(nodes: &[NodeId], window_s: f64, duration_s: f64) -> Vec<AlarmWindow> {
    assert!(window_s >= 0.0, "alarm window length cannot be negative");
    let hours = (duration_s / 3600.0).ceil() as u64;
    let mut windows = Vec::new();
    for &node in nodes {
        for h in 0..hours {
            windows.push(AlarmWindow {
                node,
                start_s: h as f64 * 3600.0,
                duration_s: window_s,
            });
        }
    }
    windows
}
