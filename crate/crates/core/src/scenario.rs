//! Scenario description: node layout, protocol parameters, run length.
//!
//! Scenarios are built programmatically (`build_ring_scenario`) or loaded
//! from a TOML file. The file either describes the standard ring layout via
//! a `[ring]` section or lists nodes explicitly; everything else has
//! defaults. Parse errors carry the offending line and column; semantic
//! errors name the field or node.

use std::collections::BTreeSet;
use std::f64::consts::TAU;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::channel::ChannelParams;
use crate::icrp::IcrpConfig;
use crate::mac::MacConfig;
use crate::modem::{self, ModemConfig, TfId};
use crate::traffic::{alarm_hourly_schedule, AlarmWindow, TrafficConfig};

/// Index of a node within the scenario's node list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeRole {
    Sink,
    Relay,
    Sensor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeConfig {
    pub name: String,
    pub role: NodeRole,
    /// Position in metres; z is depth and usually shared by every node.
    pub position: [f64; 3],
    /// Scalar aperture gain applied at both ends of this node's links.
    pub directivity_gain_db: f64,
    /// When false the node never forwards other nodes' broadcasts.
    pub bc_forwarding: bool,
    pub initial_tf: TfId,
}

impl NodeConfig {
    pub fn new(name: &str, role: NodeRole, x: f64, y: f64) -> NodeConfig {
        NodeConfig {
            name: name.to_string(),
            role,
            position: [x, y, 0.0],
            directivity_gain_db: 0.0,
            bc_forwarding: true,
            initial_tf: TfId::Tf1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub nodes: Vec<NodeConfig>,
    pub channel: ChannelParams,
    pub modem: ModemConfig,
    pub mac: MacConfig,
    pub icrp: IcrpConfig,
    pub traffic: TrafficConfig,
    pub duration_s: f64,
    pub seed: u64,
    /// Extra time after the traffic cutoff during which in-flight events may
    /// still complete before the run stops.
    pub drain_grace_s: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("scenario file: {0}")]
    Parse(String),
    #[error("scenario must contain exactly one sink node, found {0}")]
    SinkCount(usize),
    #[error("duplicate node id {0:?}")]
    DuplicateNode(String),
    #[error("unknown node id {0:?}")]
    UnknownNode(String),
    #[error("node list: provide either a [ring] section or explicit [[node]] entries")]
    NoNodes,
    #[error("node list: [ring] and [[node]] entries are mutually exclusive")]
    RingAndNodes,
    #[error("{field}: {message}")]
    BadValue {
        field: &'static str,
        message: String,
    },
}

fn bad(field: &'static str, message: impl Into<String>) -> ScenarioError {
    ScenarioError::BadValue {
        field,
        message: message.into(),
    }
}

impl Scenario {
    /// A scenario with the given nodes and default everything else.
    pub fn with_nodes(nodes: Vec<NodeConfig>) -> Scenario {
        Scenario {
            nodes,
            channel: ChannelParams::default(),
            modem: ModemConfig::default(),
            mac: MacConfig::default(),
            icrp: IcrpConfig::default(),
            traffic: TrafficConfig::default(),
            duration_s: 7200.0,
            seed: 1,
            drain_grace_s: 60.0,
        }
    }

    pub fn node_id(&self, name: &str) -> Option<NodeId> {
        self.nodes
            .iter()
            .position(|n| n.name == name)
            .map(|i| NodeId(i as u32))
    }

    pub fn name(&self, id: NodeId) -> &str {
        &self.nodes[id.index()].name
    }

    pub fn sink(&self) -> NodeId {
        let idx = self
            .nodes
            .iter()
            .position(|n| n.role == NodeRole::Sink)
            .expect("validated scenario has a sink");
        NodeId(idx as u32)
    }

    pub fn sensors(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.role == NodeRole::Sensor)
            .map(|(i, _)| NodeId(i as u32))
    }

    pub fn distance_m(&self, a: NodeId, b: NodeId) -> f64 {
        let pa = self.nodes[a.index()].position;
        let pb = self.nodes[b.index()].position;
        let dx = pa[0] - pb[0];
        let dy = pa[1] - pb[1];
        let dz = pa[2] - pb[2];
        (dx * dx + dy * dy + dz * dz).sqrt()
    }

    /// Longest node-to-sink distance; the power calibration range.
    pub fn max_sink_range_m(&self) -> f64 {
        let sink = self.sink();
        (0..self.nodes.len())
            .map(|i| self.distance_m(NodeId(i as u32), sink))
            .fold(0.0, f64::max)
    }

    /// Longest distance between any pair of nodes.
    pub fn max_pair_range_m(&self) -> f64 {
        let n = self.nodes.len();
        let mut max = 0.0f64;
        for a in 0..n {
            for b in (a + 1)..n {
                max = max.max(self.distance_m(NodeId(a as u32), NodeId(b as u32)));
            }
        }
        max
    }

    /// Source level from the config, or calibrated so the farthest node can
    /// just reach the sink.
    pub fn source_level_db(&self) -> f64 {
        match self.modem.source_level_db {
            Some(sl) => sl,
            None => modem::calibrate_source_level_db(self.max_sink_range_m(), &self.channel),
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return Err(bad(
                "duration_s",
                format!("must be positive, got {}", self.duration_s),
            ));
        }
        if !(self.drain_grace_s.is_finite() && self.drain_grace_s >= 0.0) {
            return Err(bad("drain_grace_s", "must be non-negative"));
        }

        let sinks = self
            .nodes
            .iter()
            .filter(|n| n.role == NodeRole::Sink)
            .count();
        if sinks != 1 {
            return Err(ScenarioError::SinkCount(sinks));
        }
        let mut names = BTreeSet::new();
        for node in &self.nodes {
            if node.name.is_empty() {
                return Err(bad("node.id", "node ids cannot be empty"));
            }
            if !names.insert(node.name.as_str()) {
                return Err(ScenarioError::DuplicateNode(node.name.clone()));
            }
            if node.position.iter().any(|c| !c.is_finite()) {
                return Err(bad(
                    "node.position",
                    format!("{:?} has a non-finite coordinate", node.name),
                ));
            }
            if !node.directivity_gain_db.is_finite() {
                return Err(bad("node.directivity_gain_db", format!("{:?}", node.name)));
            }
        }

        let ch = &self.channel;
        if !(ch.frequency_khz.is_finite() && ch.frequency_khz > 0.0) {
            return Err(bad("channel.frequency_khz", "must be positive"));
        }
        if !(1.0..=2.0).contains(&ch.spreading_coeff_k) {
            return Err(bad(
                "channel.spreading_coeff_k",
                format!("must lie in [1, 2], got {}", ch.spreading_coeff_k),
            ));
        }
        if !(ch.sound_speed_mps.is_finite() && ch.sound_speed_mps > 0.0) {
            return Err(bad("channel.sound_speed_mps", "must be positive"));
        }
        if !ch.noise_level_db.is_finite() || !ch.detect_threshold_db.is_finite() {
            return Err(bad(
                "channel",
                "noise and detection threshold must be finite",
            ));
        }

        let md = &self.modem;
        if let Some(sl) = md.source_level_db {
            if !sl.is_finite() {
                return Err(bad("modem.source_level_db", "must be finite"));
            }
        }
        if !(md.sync_overhead_s.is_finite() && md.sync_overhead_s >= 0.0) {
            return Err(bad("modem.sync_overhead_s", "must be non-negative"));
        }
        if let Some(cap) = md.max_frame_duration_s {
            if !cap.is_finite() || cap <= md.sync_overhead_s {
                return Err(bad(
                    "modem.max_frame_duration_s",
                    "must exceed the sync overhead",
                ));
            }
        }
        if md.ack_bits == 0 || md.status_base_bits == 0 {
            return Err(bad("modem", "ack and status sizes must be positive"));
        }

        let mac = &self.mac;
        if let Some(w) = mac.backoff_window_s {
            if !(w.is_finite() && w > 0.0) {
                return Err(bad("mac.backoff_window_s", "must be positive"));
            }
        }
        if !(mac.ack_guard_s.is_finite() && mac.ack_guard_s >= 0.0) {
            return Err(bad("mac.ack_guard_s", "must be non-negative"));
        }
        if mac.queue_capacity == 0 {
            return Err(bad("mac.queue_capacity", "must hold at least one frame"));
        }
        if let Some(t) = mac.ack_timeout_s {
            // Lower bound uses the fastest format's ack so a deliberately
            // TF3-only configuration is not rejected.
            let floor = modem::frame_duration_s(md.ack_bits, TfId::Tf3, md)
                + 2.0 * self.max_pair_range_m() / ch.sound_speed_mps
                + mac.ack_guard_s;
            if t < floor {
                return Err(bad(
                    "mac.ack_timeout_s",
                    format!("{t} s cannot cover an ack round trip (needs at least {floor:.3} s)"),
                ));
            }
        }

        let icrp = &self.icrp;
        if icrp.hop_limit == 0 {
            return Err(bad("icrp.hop_limit", "must allow at least one hop"));
        }
        if icrp.patience == 0 {
            return Err(bad("icrp.patience", "must allow at least one failure"));
        }
        if !(icrp.status_window_s.is_finite() && icrp.status_window_s >= 0.0) {
            return Err(bad("icrp.status_window_s", "must be non-negative"));
        }
        if let Some(life) = icrp.route_lifetime_s {
            if !(life.is_finite() && life > 0.0) {
                return Err(bad("icrp.route_lifetime_s", "must be positive when set"));
            }
        }
        if icrp.rate_up_successes == 0 || icrp.rate_down_failures == 0 {
            return Err(bad("icrp", "rate adaptation thresholds must be positive"));
        }
        if icrp.dup_cache_capacity < self.nodes.len() {
            return Err(bad(
                "icrp.dup_cache_capacity",
                "must be at least the node count, or forward-once cannot be guaranteed",
            ));
        }

        let tr = &self.traffic;
        if !(tr.measurement_period_s.is_finite() && tr.measurement_period_s > 0.0) {
            return Err(bad("traffic.measurement_period_s", "must be positive"));
        }
        if tr.normal_decimation == 0 || tr.alarm_decimation == 0 {
            return Err(bad("traffic", "decimations must be at least 1"));
        }
        if tr.payload_bits == 0 {
            return Err(bad("traffic.payload_bits", "must be positive"));
        }
        if let Some(i) = tr.constant_interval_s {
            if !(i.is_finite() && i > 0.0) {
                return Err(bad("traffic.constant_interval_s", "must be positive"));
            }
        }
        for w in &tr.alarm_windows {
            if w.node.index() >= self.nodes.len() {
                return Err(ScenarioError::UnknownNode(format!("{}", w.node)));
            }
            if self.nodes[w.node.index()].role != NodeRole::Sensor {
                return Err(bad(
                    "traffic.alarm",
                    format!("{:?} is not a sensor", self.nodes[w.node.index()].name),
                ));
            }
            if w.start_s < 0.0 || w.duration_s < 0.0 {
                return Err(bad(
                    "traffic.alarm",
                    "window start and duration must be non-negative",
                ));
            }
        }

        // The link layer never fragments, so when a hard frame ceiling is
        // configured, every frame the protocol can produce has to fit at
        // the slowest format: data payloads, the longest possible status
        // report, and acks.
        if md.max_frame_duration_s.is_some() {
            let status_bits =
                md.status_base_bits + md.status_per_hop_bits * (icrp.hop_limit as u64 + 1);
            let checks = [
                ("traffic.payload_bits", tr.payload_bits),
                ("modem.status_base_bits", status_bits),
                ("modem.ack_bits", md.ack_bits),
            ];
            for (field, bits) in checks {
                if modem::fragment(bits, TfId::Tf1, md).len() > 1 {
                    return Err(bad(
                        "modem.max_frame_duration_s",
                        format!("{bits} bits ({field}) do not fit in one frame at TF1"),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Scenario, ScenarioError> {
        let file: ScenarioFile =
            toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        let sc = file.resolve()?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Scenario, ScenarioError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Scenario::from_toml_str(&text)
    }
}

/// The standard layout: a sink at the origin, `n_relays` on an inner circle
/// of radius `node_distance_m`, `n_sensors` on an outer circle of twice that
/// radius, both starting at angle zero so sensors and relays share spokes
/// where counts align.
pub fn build_ring_scenario(
    node_distance_m: f64,
    n_sensors: u32,
    n_relays: u32,
) -> Result<Scenario, ScenarioError> {
    if !(node_distance_m.is_finite() && node_distance_m > 0.0) {
        return Err(bad(
            "ring.node_distance_m",
            format!("must be positive, got {node_distance_m}"),
        ));
    }
    let mut nodes = vec![NodeConfig::new("sink", NodeRole::Sink, 0.0, 0.0)];
    for i in 0..n_relays {
        let angle = TAU * i as f64 / n_relays as f64;
        nodes.push(NodeConfig::new(
            &format!("r{}", i + 1),
            NodeRole::Relay,
            node_distance_m * angle.cos(),
            node_distance_m * angle.sin(),
        ));
    }
    for i in 0..n_sensors {
        let angle = TAU * i as f64 / n_sensors as f64;
        nodes.push(NodeConfig::new(
            &format!("s{}", i + 1),
            NodeRole::Sensor,
            2.0 * node_distance_m * angle.cos(),
            2.0 * node_distance_m * angle.sin(),
        ));
    }
    Ok(Scenario::with_nodes(nodes))
}

// --- file schema ---------------------------------------------------------

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    duration_s: f64,
    #[serde(default = "default_seed")]
    seed: u64,
    #[serde(default = "default_drain_grace")]
    drain_grace_s: f64,
    /// Default transport format for nodes that do not override it.
    #[serde(default = "default_tf")]
    initial_tf: TfId,
    ring: Option<RingFile>,
    #[serde(default, rename = "node")]
    nodes: Vec<NodeFile>,
    #[serde(default)]
    channel: ChannelParams,
    #[serde(default)]
    modem: ModemConfig,
    #[serde(default)]
    mac: MacConfig,
    #[serde(default)]
    icrp: IcrpConfig,
    #[serde(default)]
    traffic: TrafficFile,
}

fn default_seed() -> u64 {
    1
}
fn default_drain_grace() -> f64 {
    60.0
}
fn default_tf() -> TfId {
    TfId::Tf1
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RingFile {
    #[serde(default = "default_ring_distance")]
    node_distance_m: f64,
    #[serde(default = "default_ring_sensors")]
    n_sensors: u32,
    #[serde(default = "default_ring_relays")]
    n_relays: u32,
}

fn default_ring_distance() -> f64 {
    600.0
}
fn default_ring_sensors() -> u32 {
    8
}
fn default_ring_relays() -> u32 {
    4
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeFile {
    id: String,
    role: NodeRole,
    x: f64,
    y: f64,
    #[serde(default)]
    z: f64,
    #[serde(default)]
    directivity_gain_db: f64,
    #[serde(default = "default_true")]
    bc_forwarding: bool,
    initial_tf: Option<TfId>,
}

fn default_true() -> bool {
    true
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct TrafficFile {
    measurement_period_s: Option<f64>,
    normal_decimation: Option<u32>,
    alarm_decimation: Option<u32>,
    payload_bits: Option<u64>,
    constant_interval_s: Option<f64>,
    phase_offsets: Option<bool>,
    #[serde(default, rename = "alarm")]
    alarm: Vec<AlarmFile>,
    alarm_hourly: Option<AlarmHourlyFile>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AlarmFile {
    node: String,
    start_s: f64,
    duration_s: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AlarmHourlyFile {
    nodes: Vec<String>,
    window_s: f64,
}

impl ScenarioFile {
    fn resolve(self) -> Result<Scenario, ScenarioError> {
        let mut sc = match (&self.ring, self.nodes.is_empty()) {
            (Some(_), false) => return Err(ScenarioError::RingAndNodes),
            (None, true) => return Err(ScenarioError::NoNodes),
            (Some(ring), true) => {
                build_ring_scenario(ring.node_distance_m, ring.n_sensors, ring.n_relays)?
            }
            (None, false) => {
                let nodes = self
                    .nodes
                    .iter()
                    .map(|n| NodeConfig {
                        name: n.id.clone(),
                        role: n.role,
                        position: [n.x, n.y, n.z],
                        directivity_gain_db: n.directivity_gain_db,
                        bc_forwarding: n.bc_forwarding,
                        initial_tf: n.initial_tf.unwrap_or(self.initial_tf),
                    })
                    .collect();
                Scenario::with_nodes(nodes)
            }
        };
        for node in &mut sc.nodes {
            if self.nodes.is_empty() {
                node.initial_tf = self.initial_tf;
            }
        }
        sc.duration_s = self.duration_s;
        sc.seed = self.seed;
        sc.drain_grace_s = self.drain_grace_s;
        sc.channel = self.channel;
        sc.modem = self.modem;
        sc.mac = self.mac;
        sc.icrp = self.icrp;

        let tf = self.traffic;
        let defaults = TrafficConfig::default();
        let mut traffic = TrafficConfig {
            measurement_period_s: tf
                .measurement_period_s
                .unwrap_or(defaults.measurement_period_s),
            normal_decimation: tf.normal_decimation.unwrap_or(defaults.normal_decimation),
            alarm_decimation: tf.alarm_decimation.unwrap_or(defaults.alarm_decimation),
            payload_bits: tf.payload_bits.unwrap_or(defaults.payload_bits),
            alarm_windows: Vec::new(),
            constant_interval_s: tf.constant_interval_s,
            phase_offsets: tf.phase_offsets.unwrap_or(defaults.phase_offsets),
        };
        for a in &tf.alarm {
            let node = sc
                .node_id(&a.node)
                .ok_or_else(|| ScenarioError::UnknownNode(a.node.clone()))?;
            traffic.alarm_windows.push(AlarmWindow {
                node,
                start_s: a.start_s,
                duration_s: a.duration_s,
            });
        }
        if let Some(hourly) = &tf.alarm_hourly {
            let mut ids = Vec::new();
            for name in &hourly.nodes {
                ids.push(
                    sc.node_id(name)
                        .ok_or_else(|| ScenarioError::UnknownNode(name.clone()))?,
                );
            }
            traffic.alarm_windows.extend(alarm_hourly_schedule(
                &ids,
                hourly.window_s,
                sc.duration_s,
            ));
        }
        sc.traffic = traffic;
        Ok(sc)
    }
}
