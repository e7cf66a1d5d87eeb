//! Modem transport formats, framing and the half-duplex transceiver state.
//!
//! Three fixed transport formats trade rate for robustness. Frame durations
//! come from the payload size and the format's net bit rate plus a fixed
//! synchronization overhead; protocol header bits are considered part of that
//! budget rather than modelled separately.

use serde::{Deserialize, Serialize};

use crate::channel::{self, ChannelParams};
use crate::event::ArrivalId;

/// A modem transport format: a fixed net payload bit rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TfId {
    #[serde(rename = "TF1")]
    Tf1,
    #[serde(rename = "TF2")]
    Tf2,
    #[serde(rename = "TF3")]
    Tf3,
}

impl TfId {
    pub const ALL: [TfId; 3] = [TfId::Tf1, TfId::Tf2, TfId::Tf3];

    pub fn rate_bps(self) -> f64 {
        match self {
            TfId::Tf1 => 200.0,
            TfId::Tf2 => 400.0,
            TfId::Tf3 => 1700.0,
        }
    }

    /// Next faster format, saturating at TF3.
    pub fn step_up(self) -> TfId {
        match self {
            TfId::Tf1 => TfId::Tf2,
            TfId::Tf2 | TfId::Tf3 => TfId::Tf3,
        }
    }

    /// Next more robust format, saturating at TF1.
    pub fn step_down(self) -> TfId {
        match self {
            TfId::Tf3 => TfId::Tf2,
            TfId::Tf2 | TfId::Tf1 => TfId::Tf1,
        }
    }

    pub fn index(self) -> usize {
        match self {
            TfId::Tf1 => 0,
            TfId::Tf2 => 1,
            TfId::Tf3 => 2,
        }
    }

    pub fn from_index(i: usize) -> TfId {
        TfId::ALL[i]
    }

    pub fn name(self) -> &'static str {
        match self {
            TfId::Tf1 => "TF1",
            TfId::Tf2 => "TF2",
            TfId::Tf3 => "TF3",
        }
    }
}

impl std::fmt::Display for TfId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for TfId {
    type Err = String;
    fn from_str(s: &str) -> Result<TfId, String> {
        match s.to_ascii_uppercase().as_str() {
            "TF1" | "1" => Ok(TfId::Tf1),
            "TF2" | "2" => Ok(TfId::Tf2),
            "TF3" | "3" => Ok(TfId::Tf3),
            other => Err(format!(
                "unknown transport format {other:?} (expected TF1, TF2 or TF3)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModemConfig {
    /// Transmit source level in dB. When absent it is calibrated so the
    /// longest node-to-sink link sits exactly at the detection threshold.
    pub source_level_db: Option<f64>,
    /// Fixed per-frame synchronization cost in seconds.
    pub sync_overhead_s: f64,
    /// Upper bound on a single frame's duration; longer messages fragment.
    pub max_frame_duration_s: Option<f64>,
    pub ack_bits: u64,
    pub status_base_bits: u64,
    pub status_per_hop_bits: u64,
}

impl Default for ModemConfig {
    fn default() -> ModemConfig {
        ModemConfig {
            source_level_db: None,
            sync_overhead_s: 0.0,
            max_frame_duration_s: None,
            ack_bits: 40,
            status_base_bits: 80,
            status_per_hop_bits: 16,
        }
    }
}

/// Duration in seconds of one frame carrying `payload_bits` at `tf`.
pub fn frame_duration_s(payload_bits: u64, tf: TfId, cfg: &ModemConfig) -> f64 {
    cfg.sync_overhead_s + payload_bits as f64 / tf.rate_bps()
}

/// Splits a message into the fewest frames whose individual durations fit
/// under `max_frame_duration_s`, balancing the bits across them. Without a
/// cap the message is a single frame.
///
/// The returned payload sizes sum to `message_bits`, so concatenating the
/// fragments reconstructs the message exactly.
pub fn fragment(message_bits: u64, tf: TfId, cfg: &ModemConfig) -> Vec<u64> {
    assert!(message_bits > 0, "cannot fragment an empty message");
    let cap_s = match cfg.max_frame_duration_s {
        None => return vec![message_bits],
        Some(cap) => cap,
    };
    let budget_s = cap_s - cfg.sync_overhead_s;
    let max_bits = (budget_s * tf.rate_bps()).floor() as i64;
    assert!(
        max_bits >= 1,
        "frame duration cap {cap_s}s leaves no payload budget at {tf}"
    );
    let max_bits = max_bits as u64;
    let n = message_bits.div_ceil(max_bits);
    let base = message_bits / n;
    let rem = message_bits % n;
    (0..n).map(|i| base + u64::from(i < rem)).collect()
}

/// Source level such that a link of exactly `max_range_m` reaches the
/// detection threshold against the noise floor alone:
/// `SL = threshold + noise + TL(max_range)`.
pub fn calibrate_source_level_db(max_range_m: f64, p: &ChannelParams) -> f64 {
    assert!(max_range_m > 0.0, "calibration range must be positive");
    p.detect_threshold_db + p.noise_level_db + channel::transmission_loss_db(max_range_m, p)
}

/// Half-duplex transceiver state of one node.
///
/// The modem is either transmitting, locked onto a single arrival, or idle;
/// every other concurrent arrival is interference. Lock acquisition happens
/// only at an arrival's first instant, so a preamble missed while busy is
/// missed for good.
#[derive(Debug, Default)]
pub struct ModemState {
    transmitting: bool,
    lock: Option<ArrivalId>,
    /// Arrivals currently impinging, with their carrier-detect flag.
    inflight: Vec<(ArrivalId, bool)>,
}

impl ModemState {
    pub fn new() -> ModemState {
        ModemState::default()
    }

    pub fn is_transmitting(&self) -> bool {
        self.transmitting
    }

    pub fn locked(&self) -> Option<ArrivalId> {
        self.lock
    }

    /// Channel busy for carrier sensing: transmitting, locked, or any
    /// detectable arrival in flight.
    pub fn carrier_busy(&self) -> bool {
        self.transmitting || self.lock.is_some() || self.inflight.iter().any(|&(_, det)| det)
    }

    pub fn tx_begin(&mut self) {
        assert!(!self.transmitting, "tx_begin while already transmitting");
        assert!(
            self.lock.is_none(),
            "tx_begin while locked onto a reception"
        );
        self.transmitting = true;
    }

    pub fn tx_end(&mut self) {
        assert!(
            self.transmitting,
            "tx_end without a transmission in progress"
        );
        self.transmitting = false;
    }

    /// Registers an arrival and reports whether the receiver locked onto it.
    pub fn arrival_begin(&mut self, id: ArrivalId, detectable: bool) -> bool {
        self.inflight.push((id, detectable));
        if detectable && !self.transmitting && self.lock.is_none() {
            self.lock = Some(id);
            return true;
        }
        false
    }

    /// Removes an arrival, releasing the lock if it held one.
    pub fn arrival_end(&mut self, id: ArrivalId) {
        let idx = self
            .inflight
            .iter()
            .position(|&(a, _)| a == id)
            .expect("arrival_end for an unknown arrival");
        self.inflight.swap_remove(idx);
        if self.lock == Some(id) {
            self.lock = None;
        }
    }
}
