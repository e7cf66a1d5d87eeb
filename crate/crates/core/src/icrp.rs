//! Information-carrying reactive routing.
//!
//! A source without a route floods its data packet as a broadcast; every
//! node forwards an unseen packet exactly once while the hop budget lasts.
//! The packet accumulates the nodes it visited and the SINR each hop was
//! decoded at, so when copies reach the sink it can pick the strongest path
//! and return it in a STATUS message that travels the path backwards,
//! installing a route at every node along the way. Data then flows as
//! unicast along the installed path until patience with consecutive link
//! failures runs out and the node falls back to broadcast, carrying whatever
//! hop budget remains.

use std::collections::{BTreeMap, HashSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::modem::TfId;
use crate::scenario::NodeId;
use crate::time::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IcrpConfig {
    /// Hop budget H: a packet is never transmitted with `hop_count >= H`.
    pub hop_limit: u32,
    /// Patience P: consecutive unicast packet losses tolerated before the
    /// route is invalidated and the packet falls back to broadcast.
    pub patience: u32,
    /// Sink-side collection window in seconds, opened at the first copy of a
    /// broadcast packet; the best path is chosen when it closes.
    pub status_window_s: f64,
    /// Route lifetime in seconds; absent means routes never expire.
    pub route_lifetime_s: Option<f64>,
    /// Consecutive unicast successes to a neighbor before stepping its
    /// transport format up.
    pub rate_up_successes: u32,
    /// Consecutive unicast failures before stepping back down.
    pub rate_down_failures: u32,
    /// Master switch for per-link rate adaptation. When off, every
    /// transmission stays at the node's initial transport format.
    pub rate_adaptation: bool,
    /// Broadcast duplicate-cache capacity (FIFO eviction).
    pub dup_cache_capacity: usize,
}

impl Default for IcrpConfig {
    fn default() -> IcrpConfig {
        IcrpConfig {
            hop_limit: 4,
            patience: 2,
            status_window_s: 3.0,
            route_lifetime_s: None,
            rate_up_successes: 3,
            rate_down_failures: 1,
            rate_adaptation: true,
            dup_cache_capacity: 4096,
        }
    }
}

/// One visited node on a packet's path and the SINR its hop decoded at.
/// The origin's own entry carries infinity (it did not travel a link).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathHop {
    pub node: NodeId,
    pub sinr_db: f64,
}

/// A data packet as the routing layer sees it. The `(origin, origin_seq)`
/// pair identifies it end to end, across retransmissions, duplication by
/// flooding, and broadcast fallback.
#[derive(Debug, Clone, PartialEq)]
pub struct DataPacket {
    pub origin: NodeId,
    pub origin_seq: u64,
    pub payload_bits: u64,
    /// Hops travelled so far; equals `path.len() - 1`.
    pub hop_count: u32,
    pub path: Vec<PathHop>,
    /// Present while the packet travels a source route as unicast:
    /// the full path and the index of the node currently addressed.
    pub uc_route: Option<UcRoute>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UcRoute {
    pub route: Vec<NodeId>,
    pub next: usize,
}

/// Sink reply carrying the chosen path; travels the path in reverse,
/// hop by hop, installing route suffixes as it goes. `cursor` is the index
/// of the node the frame is currently addressed to.
#[derive(Debug, Clone, PartialEq)]
pub struct StatusPacket {
    pub origin: NodeId,
    pub origin_seq: u64,
    pub path: Vec<NodeId>,
    pub min_sinr_db: f64,
    pub cursor: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RouteEntry {
    /// This node first, the sink last.
    pub path_to_sink: Vec<NodeId>,
    pub min_sinr_db: f64,
    pub established: SimTime,
}

impl RouteEntry {
    pub fn next_hop(&self) -> NodeId {
        self.path_to_sink[1]
    }

    pub fn expired(&self, now: SimTime, lifetime_s: Option<f64>) -> bool {
        match lifetime_s {
            None => false,
            Some(life) => now.saturating_sub(self.established) > SimTime::from_secs(life),
        }
    }
}

/// FIFO-bounded set of `(origin, origin_seq)` pairs already forwarded.
#[derive(Debug)]
pub struct DupCache {
    cap: usize,
    set: HashSet<(NodeId, u64)>,
    order: VecDeque<(NodeId, u64)>,
}

impl DupCache {
    pub fn new(cap: usize) -> DupCache {
        assert!(cap > 0, "duplicate cache needs a positive capacity");
        DupCache {
            cap,
            set: HashSet::new(),
            order: VecDeque::new(),
        }
    }

    pub fn contains(&self, key: (NodeId, u64)) -> bool {
        self.set.contains(&key)
    }

    /// Inserts the key, evicting the oldest entry when full. Returns false
    /// if the key was already present.
    pub fn insert(&mut self, key: (NodeId, u64)) -> bool {
        if !self.set.insert(key) {
            return false;
        }
        self.order.push_back(key);
        if self.order.len() > self.cap {
            let old = self.order.pop_front().unwrap();
            self.set.remove(&old);
        }
        true
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }
}

/// Per-neighbor transport format selection state.
#[derive(Debug, Clone, Copy)]
pub struct LinkRate {
    pub tf: TfId,
    consecutive_successes: u32,
    consecutive_failures: u32,
}

impl LinkRate {
    pub fn new(tf: TfId) -> LinkRate {
        LinkRate {
            tf,
            consecutive_successes: 0,
            consecutive_failures: 0,
        }
    }

    /// Feeds the outcome of a completed unicast ARQ transaction. Enough
    /// consecutive successes step the format up, enough consecutive failures
    /// step it down; either step resets both counters.
    pub fn on_outcome(&mut self, success: bool, cfg: &IcrpConfig) {
        if !cfg.rate_adaptation {
            return;
        }
        if success {
            self.consecutive_failures = 0;
            self.consecutive_successes += 1;
            if self.consecutive_successes >= cfg.rate_up_successes {
                self.tf = self.tf.step_up();
                self.consecutive_successes = 0;
            }
        } else {
            self.consecutive_successes = 0;
            self.consecutive_failures += 1;
            if self.consecutive_failures >= cfg.rate_down_failures {
                self.tf = self.tf.step_down();
                self.consecutive_failures = 0;
            }
        }
    }
}

/// A candidate path collected at the sink during the status window.
#[derive(Debug, Clone, PartialEq)]
pub struct PathCandidate {
    /// Origin first, sink last, each hop with its decode SINR.
    pub path: Vec<PathHop>,
    pub arrived: SimTime,
}

impl PathCandidate {
    pub fn min_sinr_db(&self) -> f64 {
        self.path
            .iter()
            .map(|h| h.sinr_db)
            .filter(|s| s.is_finite())
            .fold(f64::INFINITY, f64::min)
    }

    pub fn hops(&self) -> usize {
        self.path.len() - 1
    }
}

/// Picks the best of the collected candidates: the largest minimum hop SINR
/// wins; ties fall to fewer hops, then earlier arrival, then the
/// lexicographically smallest node sequence.
pub fn select_best_path(candidates: &[PathCandidate]) -> &PathCandidate {
    assert!(
        !candidates.is_empty(),
        "path selection needs at least one candidate"
    );
    candidates
        .iter()
        .min_by(|a, b| {
            b.min_sinr_db()
                .total_cmp(&a.min_sinr_db())
                .then_with(|| a.hops().cmp(&b.hops()))
                .then_with(|| a.arrived.cmp(&b.arrived))
                .then_with(|| {
                    let ids = |c: &PathCandidate| -> Vec<u32> {
                        c.path.iter().map(|h| h.node.0).collect()
                    };
                    ids(a).cmp(&ids(b))
                })
        })
        .unwrap()
}

/// Sink-side state for one broadcast packet's collection window.
#[derive(Debug)]
pub struct StatusWindow {
    pub candidates: Vec<PathCandidate>,
}

/// Routing state of one node.
#[derive(Debug)]
pub struct IcrpState {
    pub route: Option<RouteEntry>,
    /// Consecutive unicast packet losses; compared against patience.
    pub consecutive_failures: u32,
    pub origin_seq: u64,
    pub dup: DupCache,
    pub link_rate: BTreeMap<NodeId, LinkRate>,
    /// Sink only: open collection windows keyed by packet identity.
    pub windows: BTreeMap<(NodeId, u64), StatusWindow>,
    /// Sink only: packet identities already delivered to the application.
    pub delivered: HashSet<(NodeId, u64)>,
    /// Accumulated microseconds this node held a live route.
    pub uc_accum_micros: u64,
    pub uc_since: Option<SimTime>,
}

impl IcrpState {
    pub fn new(dup_cache_capacity: usize) -> IcrpState {
        IcrpState {
            route: None,
            consecutive_failures: 0,
            origin_seq: 0,
            dup: DupCache::new(dup_cache_capacity),
            link_rate: BTreeMap::new(),
            windows: BTreeMap::new(),
            delivered: HashSet::new(),
            uc_accum_micros: 0,
            uc_since: None,
        }
    }

    pub fn link_rate_mut(&mut self, neighbor: NodeId, initial_tf: TfId) -> &mut LinkRate {
        self.link_rate
            .entry(neighbor)
            .or_insert_with(|| LinkRate::new(initial_tf))
    }

    /// Transport format for the next unicast frame to `neighbor`.
    pub fn tf_for(&mut self, neighbor: NodeId, initial_tf: TfId) -> TfId {
        self.link_rate_mut(neighbor, initial_tf).tf
    }

    pub fn install_route(&mut self, entry: RouteEntry, now: SimTime) {
        self.route = Some(entry);
        self.consecutive_failures = 0;
        if self.uc_since.is_none() {
            self.uc_since = Some(now);
        }
    }

    pub fn invalidate_route(&mut self, now: SimTime) {
        self.route = None;
        self.consecutive_failures = 0;
        if let Some(since) = self.uc_since.take() {
            self.uc_accum_micros += (now - since).as_micros();
        }
    }

    /// The live route for new originations, honoring the lifetime bound.
    pub fn live_route(&mut self, now: SimTime, lifetime_s: Option<f64>) -> Option<&RouteEntry> {
        if let Some(route) = &self.route {
            if route.expired(now, lifetime_s) {
                self.invalidate_route(now);
            }
        }
        self.route.as_ref()
    }
}
