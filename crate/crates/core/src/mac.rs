//! CSMA-Aloha medium access with unicast acknowledgement and ARQ.
//!
//! A node senses the channel before each transmission and defers by a uniform
//! random backoff while it is busy. Only unicast data runs the stop-and-wait
//! ARQ loop; broadcasts, status messages and the acknowledgements themselves
//! are fire-and-forget. Acknowledgements take priority over queued data so a
//! node can keep acknowledging while it waits out its own ARQ timer.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::event::EventId;
use crate::icrp::{DataPacket, StatusPacket};
use crate::modem::TfId;
use crate::scenario::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MacConfig {
    /// Upper edge of the uniform backoff window in seconds. When absent it
    /// defaults to twice the pending frame's duration at its transport
    /// format.
    pub backoff_window_s: Option<f64>,
    /// ARQ acknowledgement timeout in seconds, measured from the end of the
    /// data frame. When absent it defaults to the acknowledgement duration
    /// plus a round trip over the longest link, the receiver turnaround and
    /// a 0.1 s margin.
    pub ack_timeout_s: Option<f64>,
    /// Retransmission budget: a unicast transaction sends at most
    /// `1 + max_retx` copies of the data frame.
    pub max_retx: u32,
    /// Receiver turnaround before the acknowledgement is transmitted.
    pub ack_guard_s: f64,
    /// Transmit queue bound; overflow drops the oldest queued frame.
    pub queue_capacity: usize,
}

impl Default for MacConfig {
    fn default() -> MacConfig {
        MacConfig {
            backoff_window_s: None,
            ack_timeout_s: None,
            max_retx: 2,
            ack_guard_s: 0.1,
            queue_capacity: 16,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameKind {
    DataBc,
    DataUc,
    StatusUc,
    MacAck,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dest {
    Node(NodeId),
    Broadcast,
}

/// Payload carried by a frame, as handed down by the routing layer.
#[derive(Debug, Clone, PartialEq)]
pub enum Sdu {
    Data(DataPacket),
    Status(StatusPacket),
    Ack { acked_seq: u64 },
}

/// One frame on the water.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub src: NodeId,
    pub dest: Dest,
    pub kind: FrameKind,
    /// Per-link sequence number; retransmissions within one ARQ transaction
    /// share it, which is what lets the receiver deduplicate.
    pub link_seq: u64,
    pub tf: TfId,
    pub payload_bits: u64,
    pub sdu: Sdu,
}

/// An outbound payload waiting in the data queue.
#[derive(Debug, Clone)]
pub struct Outgoing {
    pub kind: FrameKind,
    pub dest: Dest,
    pub sdu: Sdu,
}

/// Progress of the head-of-line item.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TxPhase {
    /// Waiting for an idle channel (initial attempt or after backoff).
    Pending,
    Transmitting,
    AwaitingAck {
        timeout: EventId,
    },
}

#[derive(Debug)]
pub struct Transaction {
    pub item: Outgoing,
    pub link_seq: u64,
    /// Data frames sent so far in this transaction.
    pub attempts: u32,
    pub phase: TxPhase,
}

/// A ready-to-send acknowledgement (its turnaround guard already elapsed).
#[derive(Debug, Clone, Copy)]
pub struct PendingAck {
    pub dest: NodeId,
    pub acked_seq: u64,
    pub tf: TfId,
}

/// Per-neighbor record of delivered link sequence numbers, so duplicate
/// retransmissions are re-acknowledged without being re-delivered.
#[derive(Debug, Default)]
pub struct SeenSeqs {
    set: BTreeSet<u64>,
    order: VecDeque<u64>,
}

const SEEN_CAP: usize = 64;

impl SeenSeqs {
    fn remember(&mut self, seq: u64) -> bool {
        if !self.set.insert(seq) {
            return false;
        }
        self.order.push_back(seq);
        if self.order.len() > SEEN_CAP {
            let old = self.order.pop_front().unwrap();
            self.set.remove(&old);
        }
        true
    }
}

#[derive(Debug, Default)]
pub struct MacState {
    pub queue: VecDeque<Outgoing>,
    pub acks: VecDeque<PendingAck>,
    pub current: Option<Transaction>,
    /// True while the frame in the water is an acknowledgement.
    pub ack_in_flight: bool,
    next_link_seq: BTreeMap<NodeId, u64>,
    seen: BTreeMap<NodeId, SeenSeqs>,
}

impl MacState {
    pub fn new() -> MacState {
        MacState::default()
    }

    /// Enqueues an outbound payload; on overflow the oldest queued entry is
    /// dropped and returned.
    pub fn enqueue(&mut self, item: Outgoing, capacity: usize) -> Option<Outgoing> {
        self.queue.push_back(item);
        if self.queue.len() > capacity {
            self.queue.pop_front()
        } else {
            None
        }
    }

    /// Puts an item at the front of the queue (retry of a just-failed packet).
    pub fn requeue_front(&mut self, item: Outgoing) {
        self.queue.push_front(item);
    }

    pub fn next_link_seq(&mut self, dest: NodeId) -> u64 {
        let c = self.next_link_seq.entry(dest).or_insert(0);
        *c += 1;
        *c
    }

    /// Records delivery of `(src, link_seq)`. Returns false for a duplicate.
    pub fn first_delivery(&mut self, src: NodeId, link_seq: u64) -> bool {
        self.seen.entry(src).or_default().remember(link_seq)
    }

    /// True if the node is mid-way through a unicast ARQ exchange.
    pub fn awaiting_ack(&self) -> bool {
        matches!(
            self.current,
            Some(Transaction {
                phase: TxPhase::AwaitingAck { .. },
                ..
            })
        )
    }
}
