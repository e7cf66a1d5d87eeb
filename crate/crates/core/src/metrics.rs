//! Counters collected over a run.
//!
//! Everything in `RunMetrics` is deterministic for a given scenario and
//! seed, including `trace_hash`, which folds the processed event sequence
//! into a single value so two runs can be compared cheaply.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SourceMetrics {
    pub generated: u64,
    pub delivered_unique: u64,
    /// Fraction of the run this source spent holding a usable route.
    pub uc_time_fraction: f64,
}

/// Frame losses by cause, counted at the receiver.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossCounters {
    /// Receiver was transmitting while the frame arrived.
    pub half_duplex: u64,
    /// Receiver was already locked to another frame or the frame arrived
    /// below the detection floor.
    pub capture_busy: u64,
    /// Locked and followed, but interference pushed the frame under the
    /// decode threshold.
    pub low_sinr: u64,
}

impl LossCounters {
    pub fn total(&self) -> u64 {
        self.half_duplex + self.capture_busy + self.low_sinr
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    /// Application packets emitted by sensors.
    pub generated: u64,
    /// Distinct (origin, sequence) pairs that reached the sink.
    pub delivered_unique: u64,
    /// All data arrivals at the sink, duplicates included.
    pub delivered_total: u64,
    /// Unique deliveries whose first copy arrived as a broadcast.
    pub delivered_bc: u64,
    /// Unique deliveries whose first copy arrived over an installed route.
    pub delivered_uc: u64,
    /// Route reports the sink sent back toward sources.
    pub status_sent: u64,
    /// Data frame transmissions, retransmissions included.
    pub data_tx: u64,
    /// Ack frame transmissions.
    pub ack_tx: u64,
    /// Status frame transmissions along the reverse path.
    pub status_tx: u64,
    /// Data transmissions per transport format, indexed TF1..TF3.
    pub tf_usage: [u64; 3],
    pub losses: LossCounters,
    /// Frames pushed out of a full transmit queue.
    pub mac_queue_drops: u64,
    /// Broadcast copies dropped by the duplicate cache.
    pub bc_duplicates: u64,
    /// Retransmitted frames recognised by the receiver's sequence window.
    pub link_duplicates: u64,
    pub routes_installed: u64,
    pub routes_invalidated: u64,
    /// Unicast transactions that ended in an ack.
    pub uc_acked: u64,
    /// Unicast transactions abandoned after the retry budget.
    pub uc_failed: u64,
    /// Packets converted back to broadcast after repeated unicast failure.
    pub bc_fallbacks: u64,
    pub per_source: BTreeMap<String, SourceMetrics>,
    /// Transmissions per directed link, keyed `"src->dst"`; broadcast
    /// frames count once under `"src->*"`.
    pub per_link_tx: BTreeMap<String, u64>,
    pub events_processed: u64,
    /// Order-sensitive digest of every processed event.
    pub trace_hash: u64,
}

impl RunMetrics {
    /// Delivery ratio in percent; `None` when nothing was generated.
    pub fn pdr_pct(&self) -> Option<f64> {
        (self.generated > 0).then(|| 100.0 * self.delivered_unique as f64 / self.generated as f64)
    }

    /// Status reports as a percentage of generated packets; `None` when
    /// nothing was generated.
    pub fn status_pct(&self) -> Option<f64> {
        (self.generated > 0).then(|| 100.0 * self.status_sent as f64 / self.generated as f64)
    }
}

fn pct(v: Option<f64>) -> String {
    match v {
        Some(p) => format!("{p:.2}%"),
        None => "n/a".to_string(),
    }
}

impl fmt::Display for RunMetrics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "generated            {}", self.generated)?;
        writeln!(
            f,
            "delivered            {} unique ({}), {} total, bc {} / uc {}",
            self.delivered_unique,
            pct(self.pdr_pct()),
            self.delivered_total,
            self.delivered_bc,
            self.delivered_uc,
        )?;
        writeln!(
            f,
            "status reports       {} ({})",
            self.status_sent,
            pct(self.status_pct())
        )?;
        writeln!(
            f,
            "frames sent          {} data, {} ack, {} status",
            self.data_tx, self.ack_tx, self.status_tx
        )?;
        writeln!(
            f,
            "tf usage             TF1 {}, TF2 {}, TF3 {}",
            self.tf_usage[0], self.tf_usage[1], self.tf_usage[2]
        )?;
        writeln!(
            f,
            "losses               {} half-duplex, {} busy, {} low-sinr, {} queue drops",
            self.losses.half_duplex,
            self.losses.capture_busy,
            self.losses.low_sinr,
            self.mac_queue_drops
        )?;
        writeln!(
            f,
            "duplicates           {} broadcast, {} link-level",
            self.bc_duplicates, self.link_duplicates
        )?;
        writeln!(
            f,
            "routing              {} installed, {} invalidated, {} bc fallbacks, uc {} acked / {} failed",
            self.routes_installed, self.routes_invalidated, self.bc_fallbacks, self.uc_acked, self.uc_failed
        )?;
        write!(
            f,
            "trace                {:016x} over {} events",
            self.trace_hash, self.events_processed
        )
    }
}
