//! Event queue for the discrete-event loop.
//!
//! Events are totally ordered by `(time, seq)` where `seq` is the scheduling
//! order; ties at the same instant therefore resolve in the order they were
//! scheduled. Cancellation is lazy: a cancelled id stays in the heap and is
//! skipped on pop.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};

use crate::modem::TfId;
use crate::scenario::NodeId;
use crate::time::SimTime;

pub type EventId = u64;
pub type ArrivalId = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    /// MAC transmission attempt: sense the channel and either start
    /// transmitting or back off. Sensing and the start of the transmission
    /// happen atomically inside the handler.
    TxStart(NodeId),
    TxEnd(NodeId),
    ArrivalStart(ArrivalId),
    ArrivalEnd(ArrivalId),
    Timer(NodeId, TimerKind),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimerKind {
    /// Turnaround guard elapsed; move the pending acknowledgement into the
    /// transmit path.
    AckReady {
        dest: NodeId,
        acked_seq: u64,
        tf: TfId,
    },
    AckTimeout,
    StatusWindow {
        origin: NodeId,
        origin_seq: u64,
    },
    /// Periodic sensor measurement; `index` counts measurements since the
    /// node's phase offset.
    Measure {
        index: u64,
    },
    /// Fixed-interval emission used when a constant interval override is set.
    Emit {
        index: u64,
    },
}

#[derive(Debug, Clone, Copy)]
pub struct Event {
    pub time: SimTime,
    pub seq: u64,
    pub kind: EventKind,
}

struct HeapEntry(Event);

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.0.time == other.0.time && self.0.seq == other.0.seq
    }
}
impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // Reversed so the BinaryHeap pops the earliest (time, seq) first.
        other
            .0
            .time
            .cmp(&self.0.time)
            .then_with(|| other.0.seq.cmp(&self.0.seq))
    }
}
impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

pub struct EventQueue {
    heap: BinaryHeap<HeapEntry>,
    pending: HashSet<EventId>,
    next_seq: u64,
    now: SimTime,
}

impl EventQueue {
    pub fn new() -> EventQueue {
        EventQueue {
            heap: BinaryHeap::new(),
            pending: HashSet::new(),
            next_seq: 0,
            now: SimTime::ZERO,
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    /// Schedules `kind` at `time`, which must not lie in the past. Scheduling
    /// at the current instant is allowed; the event fires after everything
    /// already queued for that instant.
    pub fn schedule(&mut self, time: SimTime, kind: EventKind) -> EventId {
        assert!(
            time >= self.now,
            "scheduled into the past: {time:?} < {:?}",
            self.now
        );
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(HeapEntry(Event { time, seq, kind }));
        self.pending.insert(seq);
        seq
    }

    /// Cancels a pending event. Returns true iff the event existed and had
    /// neither fired nor been cancelled before.
    pub fn cancel(&mut self, id: EventId) -> bool {
        self.pending.remove(&id)
    }

    /// Pops the next live event and advances the clock to it.
    pub fn pop(&mut self) -> Option<Event> {
        while let Some(HeapEntry(ev)) = self.heap.pop() {
            if self.pending.remove(&ev.seq) {
                debug_assert!(ev.time >= self.now);
                self.now = ev.time;
                return Some(ev);
            }
        }
        None
    }

    pub fn is_empty(&self) -> bool {
        self.pending.is_empty()
    }
}

impl Default for EventQueue {
    fn default() -> Self {
        EventQueue::new()
    }
}
