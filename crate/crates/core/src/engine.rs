//! The discrete-event simulation driver.
//!
//! One `Simulator` owns the event queue, the per-node protocol state and the
//! propagation matrices, and advances the world event by event: transmission
//! attempts sense the channel and either start a frame or back off; every
//! frame fans out into one arrival per other node; arrivals lock, interfere
//! and decode per the channel rules; decoded frames feed the MAC and routing
//! layers, which in turn schedule more transmissions.
//!
//! Traffic stops at the configured duration, after which the run keeps
//! draining in-flight exchanges for a grace period so packets emitted near
//! the cutoff still count.
//!
//! Determinism: events are ordered by `(time, schedule order)`, all random
//! draws come from one counter-based generator seeded from the scenario, and
//! no code path iterates a hash table in a way that influences the world.

use std::collections::HashMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::channel::{self, ArrivalWindow, DecodeOutcome, LossReason};
use crate::event::{ArrivalId, Event, EventId, EventKind, EventQueue, TimerKind};
use crate::icrp::{
    select_best_path, DataPacket, IcrpState, PathCandidate, PathHop, RouteEntry, StatusPacket,
    StatusWindow, UcRoute,
};
use crate::mac::{
    Dest, Frame, FrameKind, MacState, Outgoing, PendingAck, Sdu, Transaction, TxPhase,
};
use crate::metrics::{RunMetrics, SourceMetrics};
use crate::modem::{frame_duration_s, ModemState, TfId};
use crate::scenario::{NodeId, NodeRole, Scenario, ScenarioError};
use crate::time::SimTime;

/// A transmission, as reported to the transmit observer hook.
pub struct TxRecord<'a> {
    pub time_s: f64,
    pub src: NodeId,
    pub frame: &'a Frame,
}

/// A successfully decoded frame, as offered to the receive filter hook
/// before the protocol layers see it. This fires for every decode, including
/// unicast frames overheard by third parties.
pub struct RxRecord<'a> {
    pub time_s: f64,
    pub src: NodeId,
    pub dst: NodeId,
    pub frame: &'a Frame,
    pub min_sinr_db: f64,
}

type RxFilter = Box<dyn FnMut(&RxRecord<'_>) -> bool>;
type TxObserver = Box<dyn FnMut(&TxRecord<'_>)>;

/// One frame travelling toward one receiver.
struct Arrival {
    src: NodeId,
    dst: NodeId,
    frame: Frame,
    window: ArrivalWindow,
    detectable: bool,
    /// The receiver captured this arrival at its first instant.
    locked: bool,
    /// The receiver transmitted at some point while this was in flight.
    hd: bool,
}

struct NodeState {
    modem: ModemState,
    mac: MacState,
    icrp: IcrpState,
    /// Pending transmission-attempt event, if any.
    attempt: Option<EventId>,
    /// Arrivals currently impinging, in start order.
    live: Vec<ArrivalId>,
    /// Windows of recently ended arrivals that may still overlap a live one.
    past_windows: Vec<ArrivalWindow>,
    /// Per-sensor phase offset of the emission schedule.
    phase: SimTime,
}

pub struct Simulator {
    sc: Scenario,
    queue: EventQueue,
    rng: ChaCha8Rng,
    nodes: Vec<NodeState>,
    arrivals: HashMap<ArrivalId, Arrival>,
    next_arrival: ArrivalId,
    /// Flattened n*n matrices indexed `src * n + dst`.
    delay: Vec<SimTime>,
    rl_db: Vec<f64>,
    detectable: Vec<bool>,
    sink: NodeId,
    duration: SimTime,
    end_cap: SimTime,
    /// Default ARQ timeout per transport format, from the frame's end.
    ack_timeout_s: [f64; 3],
    metrics: RunMetrics,
    generated_by: Vec<u64>,
    delivered_by: Vec<u64>,
    hash: u64,
    rx_filter: Option<RxFilter>,
    tx_observer: Option<TxObserver>,
}

impl Simulator {
    pub fn new(sc: Scenario) -> Result<Simulator, ScenarioError> {
        sc.validate()?;
        let n = sc.nodes.len();
        let sl = sc.source_level_db();

        let mut delay = vec![SimTime::ZERO; n * n];
        let mut rl_db = vec![0.0; n * n];
        let mut detectable = vec![false; n * n];
        for a in 0..n {
            for b in 0..n {
                if a == b {
                    continue;
                }
                let d = sc.distance_m(NodeId(a as u32), NodeId(b as u32));
                let rl = channel::received_level_db(
                    sl,
                    d,
                    sc.nodes[a].directivity_gain_db,
                    sc.nodes[b].directivity_gain_db,
                    &sc.channel,
                );
                delay[a * n + b] = channel::propagation_delay(d, &sc.channel);
                rl_db[a * n + b] = rl;
                detectable[a * n + b] = rl > sc.channel.noise_level_db;
            }
        }

        let max_pair = sc.max_pair_range_m();
        let mut ack_timeout_s = [0.0; 3];
        for tf in TfId::ALL {
            ack_timeout_s[tf.index()] = match sc.mac.ack_timeout_s {
                Some(t) => t,
                None => {
                    frame_duration_s(sc.modem.ack_bits, tf, &sc.modem)
                        + 2.0 * max_pair / sc.channel.sound_speed_mps
                        + sc.mac.ack_guard_s
                        + 0.1
                }
            };
        }

        let mut rng = ChaCha8Rng::seed_from_u64(sc.seed);
        let span = sc.traffic.phase_span_s();
        let nodes: Vec<NodeState> = (0..n)
            .map(|i| {
                let is_sensor = sc.nodes[i].role == NodeRole::Sensor;
                let phase = if is_sensor && sc.traffic.phase_offsets {
                    SimTime::from_secs(rng.gen::<f64>() * span)
                } else {
                    SimTime::ZERO
                };
                NodeState {
                    modem: ModemState::new(),
                    mac: MacState::new(),
                    icrp: IcrpState::new(sc.icrp.dup_cache_capacity),
                    attempt: None,
                    live: Vec::new(),
                    past_windows: Vec::new(),
                    phase,
                }
            })
            .collect();

        let duration = SimTime::from_secs(sc.duration_s);
        let end_cap = duration + SimTime::from_secs(sc.drain_grace_s);
        let sink = sc.sink();

        let mut sim = Simulator {
            queue: EventQueue::new(),
            rng,
            nodes,
            arrivals: HashMap::new(),
            next_arrival: 0,
            delay,
            rl_db,
            detectable,
            sink,
            duration,
            end_cap,
            ack_timeout_s,
            metrics: RunMetrics::default(),
            generated_by: vec![0; n],
            delivered_by: vec![0; n],
            hash: 0x6b_3a_55_21,
            rx_filter: None,
            tx_observer: None,
            sc,
        };
        sim.schedule_first_emissions();
        Ok(sim)
    }

    /// Installs a predicate consulted for every decoded frame before the
    /// protocol layers see it; returning false drops the frame. Test
    /// scaffolding for scripted loss.
    pub fn set_rx_filter(&mut self, f: impl FnMut(&RxRecord<'_>) -> bool + 'static) {
        self.rx_filter = Some(Box::new(f));
    }

    /// Installs an observer called once per transmitted frame.
    pub fn set_tx_observer(&mut self, f: impl FnMut(&TxRecord<'_>) + 'static) {
        self.tx_observer = Some(Box::new(f));
    }

    fn schedule_first_emissions(&mut self) {
        for i in 0..self.sc.nodes.len() {
            if self.sc.nodes[i].role != NodeRole::Sensor {
                continue;
            }
            let phase = self.nodes[i].phase;
            if phase > self.duration {
                continue;
            }
            let kind = if self.sc.traffic.constant_interval_s.is_some() {
                TimerKind::Emit { index: 0 }
            } else {
                TimerKind::Measure { index: 0 }
            };
            self.queue
                .schedule(phase, EventKind::Timer(NodeId(i as u32), kind));
        }
    }

    pub fn run(mut self) -> RunMetrics {
        while let Some(ev) = self.queue.pop() {
            if ev.time > self.end_cap {
                break;
            }
            self.metrics.events_processed += 1;
            self.fold_trace(&ev);
            match ev.kind {
                EventKind::TxStart(n) => self.on_tx_start(n),
                EventKind::TxEnd(n) => self.on_tx_end(n),
                EventKind::ArrivalStart(a) => self.on_arrival_start(a),
                EventKind::ArrivalEnd(a) => self.on_arrival_end(a),
                EventKind::Timer(n, t) => self.on_timer(n, t),
            }
        }
        self.finalize()
    }

    // --- traffic --------------------------------------------------------

    fn on_timer(&mut self, n: NodeId, timer: TimerKind) {
        match timer {
            TimerKind::Measure { index } => {
                let now = self.queue.now();
                let dec = self.sc.traffic.decimation_at(n, now);
                if index % dec as u64 == 0 {
                    self.emit_packet(n);
                }
                let period = SimTime::from_secs(self.sc.traffic.measurement_period_s);
                let next = SimTime::from_micros(
                    self.nodes[n.index()].phase.as_micros() + (index + 1) * period.as_micros(),
                );
                if next <= self.duration {
                    self.queue.schedule(
                        next,
                        EventKind::Timer(n, TimerKind::Measure { index: index + 1 }),
                    );
                }
            }
            TimerKind::Emit { index } => {
                self.emit_packet(n);
                let interval =
                    SimTime::from_secs(self.sc.traffic.constant_interval_s.expect("emit timer"));
                let next = SimTime::from_micros(
                    self.nodes[n.index()].phase.as_micros() + (index + 1) * interval.as_micros(),
                );
                if next <= self.duration {
                    self.queue.schedule(
                        next,
                        EventKind::Timer(n, TimerKind::Emit { index: index + 1 }),
                    );
                }
            }
            TimerKind::AckReady {
                dest,
                acked_seq,
                tf,
            } => {
                self.nodes[n.index()].mac.acks.push_back(PendingAck {
                    dest,
                    acked_seq,
                    tf,
                });
                self.kick(n);
            }
            TimerKind::AckTimeout => self.on_ack_timeout(n),
            TimerKind::StatusWindow { origin, origin_seq } => {
                self.close_status_window(n, origin, origin_seq)
            }
        }
    }

    fn emit_packet(&mut self, n: NodeId) {
        let now = self.queue.now();
        self.metrics.generated += 1;
        self.generated_by[n.index()] += 1;
        let st = &mut self.nodes[n.index()];
        st.icrp.origin_seq += 1;
        let seq = st.icrp.origin_seq;
        let mut packet = DataPacket {
            origin: n,
            origin_seq: seq,
            payload_bits: self.sc.traffic.payload_bits,
            hop_count: 0,
            path: vec![PathHop {
                node: n,
                sinr_db: f64::INFINITY,
            }],
            uc_route: None,
        };
        let item = match st.icrp.live_route(now, self.sc.icrp.route_lifetime_s) {
            Some(route) => {
                let next_hop = route.next_hop();
                packet.uc_route = Some(UcRoute {
                    route: route.path_to_sink.clone(),
                    next: 1,
                });
                Outgoing {
                    kind: FrameKind::DataUc,
                    dest: Dest::Node(next_hop),
                    sdu: Sdu::Data(packet),
                }
            }
            None => {
                // The origin marks its own packet so echoes are not re-flooded.
                st.icrp.dup.insert((n, seq));
                Outgoing {
                    kind: FrameKind::DataBc,
                    dest: Dest::Broadcast,
                    sdu: Sdu::Data(packet),
                }
            }
        };
        self.enqueue(n, item);
        self.kick(n);
    }

    // --- MAC ------------------------------------------------------------

    fn enqueue(&mut self, n: NodeId, item: Outgoing) {
        let cap = self.sc.mac.queue_capacity;
        if self.nodes[n.index()].mac.enqueue(item, cap).is_some() {
            self.metrics.mac_queue_drops += 1;
        }
    }

    fn has_work(&self, n: NodeId) -> bool {
        let mac = &self.nodes[n.index()].mac;
        !mac.acks.is_empty()
            || matches!(&mac.current, Some(t) if t.phase == TxPhase::Pending)
            || (mac.current.is_none() && !mac.queue.is_empty())
    }

    /// Ensures a transmission attempt is scheduled if the node has work and
    /// is free to try. Safe to call on every state change.
    fn kick(&mut self, n: NodeId) {
        let st = &self.nodes[n.index()];
        if st.attempt.is_some() || st.modem.is_transmitting() {
            return;
        }
        if !self.has_work(n) {
            return;
        }
        let id = self.queue.schedule(self.queue.now(), EventKind::TxStart(n));
        self.nodes[n.index()].attempt = Some(id);
    }

    /// The frame the node would send right now: the oldest pending
    /// acknowledgement first, otherwise the head-of-line item.
    fn build_frame(&mut self, n: NodeId) -> Option<Frame> {
        let modem_cfg = self.sc.modem;
        let initial_tf = self.sc.nodes[n.index()].initial_tf;
        let st = &mut self.nodes[n.index()];
        if let Some(pa) = st.mac.acks.front().copied() {
            return Some(Frame {
                src: n,
                dest: Dest::Node(pa.dest),
                kind: FrameKind::MacAck,
                link_seq: pa.acked_seq,
                tf: pa.tf,
                payload_bits: modem_cfg.ack_bits,
                sdu: Sdu::Ack {
                    acked_seq: pa.acked_seq,
                },
            });
        }
        let tx = match &st.mac.current {
            Some(t) if t.phase == TxPhase::Pending => t,
            _ => return None,
        };
        let (tf, payload_bits) = match (&tx.item.kind, &tx.item.dest, &tx.item.sdu) {
            (FrameKind::DataBc, _, Sdu::Data(p)) => (initial_tf, p.payload_bits),
            (FrameKind::DataUc, Dest::Node(d), Sdu::Data(p)) => {
                (st.icrp.tf_for(*d, initial_tf), p.payload_bits)
            }
            (FrameKind::StatusUc, Dest::Node(d), Sdu::Status(s)) => (
                st.icrp.tf_for(*d, initial_tf),
                modem_cfg.status_base_bits + modem_cfg.status_per_hop_bits * s.path.len() as u64,
            ),
            other => unreachable!("queued item cannot form a frame: {other:?}"),
        };
        let (link_seq, dest, kind, sdu) =
            (tx.link_seq, tx.item.dest, tx.item.kind, tx.item.sdu.clone());
        Some(Frame {
            src: n,
            dest,
            kind,
            link_seq,
            tf,
            payload_bits,
            sdu,
        })
    }

    fn on_tx_start(&mut self, n: NodeId) {
        self.nodes[n.index()].attempt = None;
        if self.nodes[n.index()].modem.is_transmitting() {
            return;
        }
        // Promote the head of the data queue into the transaction slot so
        // the frame builder sees it.
        {
            let st = &mut self.nodes[n.index()];
            if st.mac.acks.is_empty() && st.mac.current.is_none() {
                if let Some(item) = st.mac.queue.pop_front() {
                    let link_seq = match (item.kind, item.dest) {
                        (FrameKind::DataUc, Dest::Node(d)) => st.mac.next_link_seq(d),
                        _ => 0,
                    };
                    st.mac.current = Some(Transaction {
                        item,
                        link_seq,
                        attempts: 0,
                        phase: TxPhase::Pending,
                    });
                }
            }
        }
        let Some(frame) = self.build_frame(n) else {
            return;
        };
        if self.nodes[n.index()].modem.carrier_busy() {
            let w = self.sc.mac.backoff_window_s.unwrap_or_else(|| {
                2.0 * frame_duration_s(frame.payload_bits, frame.tf, &self.sc.modem)
            });
            // Uniform over (0, w]: never zero, so same-instant retry storms
            // cannot happen.
            let delay = (w * (1.0 - self.rng.gen::<f64>())).max(1e-6);
            let at = self.queue.now() + SimTime::from_secs(delay);
            let id = self.queue.schedule(at, EventKind::TxStart(n));
            self.nodes[n.index()].attempt = Some(id);
            return;
        }
        self.transmit(n, frame);
    }

    fn transmit(&mut self, n: NodeId, frame: Frame) {
        let now = self.queue.now();
        let dur = SimTime::from_secs(frame_duration_s(
            frame.payload_bits,
            frame.tf,
            &self.sc.modem,
        ));

        // Any reception in progress at this node is torn by our own
        // transmission.
        let live = self.nodes[n.index()].live.clone();
        for aid in live {
            if let Some(arr) = self.arrivals.get_mut(&aid) {
                arr.hd = true;
            }
        }

        {
            let st = &mut self.nodes[n.index()];
            if frame.kind == FrameKind::MacAck {
                st.mac.acks.pop_front();
                st.mac.ack_in_flight = true;
            } else {
                let tx = st
                    .mac
                    .current
                    .as_mut()
                    .expect("transmit without a transaction");
                tx.attempts += 1;
                tx.phase = TxPhase::Transmitting;
            }
            st.modem.tx_begin();
        }
        self.queue.schedule(now + dur, EventKind::TxEnd(n));

        match frame.kind {
            FrameKind::DataBc | FrameKind::DataUc => {
                self.metrics.data_tx += 1;
                self.metrics.tf_usage[frame.tf.index()] += 1;
            }
            FrameKind::StatusUc => self.metrics.status_tx += 1,
            FrameKind::MacAck => self.metrics.ack_tx += 1,
        }
        let link = match frame.dest {
            Dest::Node(d) => format!("{}->{}", self.sc.name(n), self.sc.name(d)),
            Dest::Broadcast => format!("{}->*", self.sc.name(n)),
        };
        *self.metrics.per_link_tx.entry(link).or_insert(0) += 1;
        if let Some(obs) = &mut self.tx_observer {
            obs(&TxRecord {
                time_s: now.as_secs(),
                src: n,
                frame: &frame,
            });
        }

        let count = self.sc.nodes.len();
        for m in 0..count {
            if m == n.index() {
                continue;
            }
            let idx = n.index() * count + m;
            let aid = self.next_arrival;
            self.next_arrival += 1;
            let start = now + self.delay[idx];
            let window = ArrivalWindow {
                rl_db: self.rl_db[idx],
                start,
                end: start + dur,
            };
            self.arrivals.insert(
                aid,
                Arrival {
                    src: n,
                    dst: NodeId(m as u32),
                    frame: frame.clone(),
                    window,
                    detectable: self.detectable[idx],
                    locked: false,
                    hd: false,
                },
            );
            self.queue.schedule(start, EventKind::ArrivalStart(aid));
            self.queue.schedule(window.end, EventKind::ArrivalEnd(aid));
        }
    }

    fn on_tx_end(&mut self, n: NodeId) {
        let now = self.queue.now();
        let mut timeout_at = None;
        {
            let st = &mut self.nodes[n.index()];
            st.modem.tx_end();
            if st.mac.ack_in_flight {
                st.mac.ack_in_flight = false;
            } else if let Some(tx) = &mut st.mac.current {
                match tx.item.kind {
                    FrameKind::DataUc => {
                        let Dest::Node(d) = tx.item.dest else {
                            unreachable!()
                        };
                        let initial_tf = self.sc.nodes[n.index()].initial_tf;
                        let tf = st.icrp.tf_for(d, initial_tf);
                        timeout_at = Some(now + SimTime::from_secs(self.ack_timeout_s[tf.index()]));
                    }
                    // Broadcast and status frames are fire-and-forget.
                    FrameKind::DataBc | FrameKind::StatusUc => st.mac.current = None,
                    FrameKind::MacAck => unreachable!("acks do not occupy the transaction slot"),
                }
            }
        }
        if let Some(at) = timeout_at {
            let id = self
                .queue
                .schedule(at, EventKind::Timer(n, TimerKind::AckTimeout));
            let st = &mut self.nodes[n.index()];
            if let Some(tx) = &mut st.mac.current {
                tx.phase = TxPhase::AwaitingAck { timeout: id };
            }
        }
        self.kick(n);
    }

    fn on_ack_timeout(&mut self, n: NodeId) {
        let now = self.queue.now();
        let max_attempts = 1 + self.sc.mac.max_retx;
        let retry = {
            let st = &mut self.nodes[n.index()];
            let Some(tx) = &mut st.mac.current else {
                return;
            };
            if !matches!(tx.phase, TxPhase::AwaitingAck { .. }) {
                return;
            }
            if tx.attempts < max_attempts {
                tx.phase = TxPhase::Pending;
                true
            } else {
                false
            }
        };
        if retry {
            self.kick(n);
            return;
        }

        // Retry budget exhausted: the unicast transaction failed.
        self.metrics.uc_failed += 1;
        let initial_tf = self.sc.nodes[n.index()].initial_tf;
        let icrp_cfg = self.sc.icrp;
        let tx = self.nodes[n.index()]
            .mac
            .current
            .take()
            .expect("checked above");
        let Dest::Node(dest) = tx.item.dest else {
            unreachable!()
        };
        let Sdu::Data(mut packet) = tx.item.sdu else {
            unreachable!("only unicast data runs ARQ")
        };
        {
            let st = &mut self.nodes[n.index()];
            st.icrp
                .link_rate_mut(dest, initial_tf)
                .on_outcome(false, &icrp_cfg);
            st.icrp.consecutive_failures += 1;
        }

        if self.nodes[n.index()].icrp.consecutive_failures < icrp_cfg.patience {
            // Patience left: try the same packet along the same route again,
            // as a fresh transaction.
            self.nodes[n.index()].mac.requeue_front(Outgoing {
                kind: FrameKind::DataUc,
                dest: Dest::Node(dest),
                sdu: Sdu::Data(packet),
            });
        } else {
            // Patience exhausted: give up on unicast, flood with whatever
            // hop budget the packet has left.
            let st = &mut self.nodes[n.index()];
            if st.icrp.route.is_some() {
                self.metrics.routes_invalidated += 1;
            }
            st.icrp.invalidate_route(now);
            debug_assert_eq!(packet.hop_count as usize, packet.path.len() - 1);
            packet.uc_route = None;
            if packet.hop_count < icrp_cfg.hop_limit {
                self.metrics.bc_fallbacks += 1;
                st.icrp.dup.insert((packet.origin, packet.origin_seq));
                st.mac.requeue_front(Outgoing {
                    kind: FrameKind::DataBc,
                    dest: Dest::Broadcast,
                    sdu: Sdu::Data(packet),
                });
            }
        }
        self.kick(n);
    }

    // --- channel --------------------------------------------------------

    fn on_arrival_start(&mut self, aid: ArrivalId) {
        let arr = self
            .arrivals
            .get_mut(&aid)
            .expect("arrival exists until its end event");
        let st = &mut self.nodes[arr.dst.index()];
        if st.modem.is_transmitting() {
            arr.hd = true;
        }
        arr.locked = st.modem.arrival_begin(aid, arr.detectable);
        st.live.push(aid);
    }

    fn on_arrival_end(&mut self, aid: ArrivalId) {
        let now = self.queue.now();
        let arr = self
            .arrivals
            .remove(&aid)
            .expect("arrival exists until its end event");
        let m = arr.dst;
        {
            let st = &mut self.nodes[m.index()];
            st.modem.arrival_end(aid);
            st.live.retain(|&a| a != aid);
        }

        // Everything that overlapped this arrival, whether still in flight
        // or already ended, is interference for it.
        let st = &self.nodes[m.index()];
        let mut interferers: Vec<ArrivalWindow> = st.past_windows.clone();
        let mut live_floor = now;
        for &other in &st.live {
            let w = self.arrivals[&other].window;
            interferers.push(w);
            live_floor = live_floor.min(w.start);
        }
        let outcome = channel::decode_outcome(
            &arr.window,
            &interferers,
            arr.hd,
            !arr.locked,
            &self.sc.channel,
        );
        {
            let st = &mut self.nodes[m.index()];
            st.past_windows.push(arr.window);
            // A past window matters only while a live arrival might still
            // overlap it.
            st.past_windows.retain(|w| w.end > live_floor);
        }

        let addressed = arr.frame.dest == Dest::Broadcast || arr.frame.dest == Dest::Node(m);
        match outcome {
            DecodeOutcome::Lost { reason, .. } => {
                if arr.detectable && addressed {
                    match reason {
                        LossReason::HalfDuplex => self.metrics.losses.half_duplex += 1,
                        LossReason::CaptureBusy => self.metrics.losses.capture_busy += 1,
                        LossReason::LowSinr => self.metrics.losses.low_sinr += 1,
                    }
                }
            }
            DecodeOutcome::Decoded { min_sinr_db } => {
                if let Some(filter) = &mut self.rx_filter {
                    let keep = filter(&RxRecord {
                        time_s: now.as_secs(),
                        src: arr.src,
                        dst: m,
                        frame: &arr.frame,
                        min_sinr_db,
                    });
                    if !keep {
                        return;
                    }
                }
                self.receive_frame(m, arr.frame, min_sinr_db);
            }
        }
    }

    // --- protocol layers ------------------------------------------------

    fn receive_frame(&mut self, m: NodeId, frame: Frame, sinr_db: f64) {
        match frame.dest {
            Dest::Node(d) if d != m => return, // overheard unicast
            _ => {}
        }
        match frame.kind {
            FrameKind::MacAck => {
                let Sdu::Ack { acked_seq } = frame.sdu else {
                    unreachable!()
                };
                self.on_ack_received(m, frame.src, acked_seq);
            }
            FrameKind::DataBc => {
                let Sdu::Data(packet) = frame.sdu else {
                    unreachable!()
                };
                self.on_data_bc(m, packet, sinr_db);
            }
            FrameKind::DataUc => {
                // Acknowledge after the turnaround guard, duplicates
                // included; the sender needs the ack either way.
                let guard = SimTime::from_secs(self.sc.mac.ack_guard_s);
                self.queue.schedule(
                    self.queue.now() + guard,
                    EventKind::Timer(
                        m,
                        TimerKind::AckReady {
                            dest: frame.src,
                            acked_seq: frame.link_seq,
                            tf: frame.tf,
                        },
                    ),
                );
                if !self.nodes[m.index()]
                    .mac
                    .first_delivery(frame.src, frame.link_seq)
                {
                    self.metrics.link_duplicates += 1;
                    return;
                }
                let Sdu::Data(packet) = frame.sdu else {
                    unreachable!()
                };
                self.on_data_uc(m, packet, sinr_db);
            }
            FrameKind::StatusUc => {
                let Sdu::Status(status) = frame.sdu else {
                    unreachable!()
                };
                self.on_status(m, status);
            }
        }
    }

    fn on_ack_received(&mut self, m: NodeId, from: NodeId, acked_seq: u64) {
        let initial_tf = self.sc.nodes[m.index()].initial_tf;
        let icrp_cfg = self.sc.icrp;
        let mut timeout = None;
        {
            let st = &mut self.nodes[m.index()];
            let Some(tx) = &st.mac.current else {
                return;
            };
            let matches = tx.item.dest == Dest::Node(from)
                && tx.link_seq == acked_seq
                && matches!(tx.phase, TxPhase::AwaitingAck { .. } | TxPhase::Pending);
            if !matches {
                return;
            }
            if let TxPhase::AwaitingAck { timeout: id } = tx.phase {
                timeout = Some(id);
            }
            st.mac.current = None;
            st.icrp.consecutive_failures = 0;
            st.icrp
                .link_rate_mut(from, initial_tf)
                .on_outcome(true, &icrp_cfg);
        }
        if let Some(id) = timeout {
            self.queue.cancel(id);
        }
        self.metrics.uc_acked += 1;
        self.kick(m);
    }

    fn on_data_bc(&mut self, m: NodeId, packet: DataPacket, sinr_db: f64) {
        if m == self.sink {
            self.deliver(packet, sinr_db, true);
            return;
        }
        let st = &mut self.nodes[m.index()];
        if !st.icrp.dup.insert((packet.origin, packet.origin_seq)) {
            self.metrics.bc_duplicates += 1;
            return;
        }
        let new_hop = packet.hop_count + 1;
        if new_hop >= self.sc.icrp.hop_limit {
            return;
        }
        if !self.sc.nodes[m.index()].bc_forwarding {
            return;
        }
        let mut fwd = packet;
        fwd.hop_count = new_hop;
        fwd.path.push(PathHop { node: m, sinr_db });
        self.enqueue(
            m,
            Outgoing {
                kind: FrameKind::DataBc,
                dest: Dest::Broadcast,
                sdu: Sdu::Data(fwd),
            },
        );
        self.kick(m);
    }

    fn on_data_uc(&mut self, m: NodeId, mut packet: DataPacket, sinr_db: f64) {
        if m == self.sink {
            self.deliver(packet, sinr_db, false);
            return;
        }
        packet.path.push(PathHop { node: m, sinr_db });
        packet.hop_count += 1;
        let Some(ur) = &mut packet.uc_route else {
            debug_assert!(false, "unicast data without a source route");
            return;
        };
        debug_assert_eq!(ur.route.get(ur.next), Some(&m));
        ur.next += 1;
        let Some(&next_hop) = ur.route.get(ur.next) else {
            debug_assert!(false, "route exhausted before the sink");
            return;
        };
        self.enqueue(
            m,
            Outgoing {
                kind: FrameKind::DataUc,
                dest: Dest::Node(next_hop),
                sdu: Sdu::Data(packet),
            },
        );
        self.kick(m);
    }

    /// Data reached the sink, by either mode. Counts it, and for a first
    /// broadcast copy opens the path-collection window.
    fn deliver(&mut self, packet: DataPacket, sinr_db: f64, via_bc: bool) {
        let now = self.queue.now();
        self.metrics.delivered_total += 1;
        let key = (packet.origin, packet.origin_seq);
        let mut path = packet.path;
        path.push(PathHop {
            node: self.sink,
            sinr_db,
        });

        let st = &mut self.nodes[self.sink.index()];
        let first = st.icrp.delivered.insert(key);
        if first {
            self.metrics.delivered_unique += 1;
            self.delivered_by[packet.origin.index()] += 1;
            if via_bc {
                self.metrics.delivered_bc += 1;
            } else {
                self.metrics.delivered_uc += 1;
            }
        }
        if !via_bc {
            return;
        }
        let candidate = PathCandidate { path, arrived: now };
        if first {
            st.icrp.windows.insert(
                key,
                StatusWindow {
                    candidates: vec![candidate],
                },
            );
            let at = now + SimTime::from_secs(self.sc.icrp.status_window_s);
            self.queue.schedule(
                at,
                EventKind::Timer(
                    self.sink,
                    TimerKind::StatusWindow {
                        origin: key.0,
                        origin_seq: key.1,
                    },
                ),
            );
        } else if let Some(w) = st.icrp.windows.get_mut(&key) {
            w.candidates.push(candidate);
        }
        // A broadcast copy straggling in after the window closed changes
        // nothing; the route choice was already made.
    }

    fn close_status_window(&mut self, n: NodeId, origin: NodeId, origin_seq: u64) {
        debug_assert_eq!(n, self.sink);
        let Some(window) = self.nodes[n.index()]
            .icrp
            .windows
            .remove(&(origin, origin_seq))
        else {
            return;
        };
        let best = select_best_path(&window.candidates);
        let path: Vec<NodeId> = best.path.iter().map(|h| h.node).collect();
        let min_sinr_db = best.min_sinr_db();
        debug_assert!(
            path.len() >= 2,
            "a delivered packet travelled at least one hop"
        );
        let cursor = path.len() - 2;
        let dest = path[cursor];
        self.metrics.status_sent += 1;
        let status = StatusPacket {
            origin,
            origin_seq,
            path,
            min_sinr_db,
            cursor,
        };
        self.enqueue(
            n,
            Outgoing {
                kind: FrameKind::StatusUc,
                dest: Dest::Node(dest),
                sdu: Sdu::Status(status),
            },
        );
        self.kick(n);
    }

    fn on_status(&mut self, m: NodeId, status: StatusPacket) {
        let now = self.queue.now();
        let i = status.cursor;
        debug_assert_eq!(status.path.get(i), Some(&m));
        {
            let st = &mut self.nodes[m.index()];
            st.icrp.install_route(
                RouteEntry {
                    path_to_sink: status.path[i..].to_vec(),
                    min_sinr_db: status.min_sinr_db,
                    established: now,
                },
                now,
            );
        }
        self.metrics.routes_installed += 1;
        if i > 0 {
            let dest = status.path[i - 1];
            let mut fwd = status;
            fwd.cursor = i - 1;
            self.enqueue(
                m,
                Outgoing {
                    kind: FrameKind::StatusUc,
                    dest: Dest::Node(dest),
                    sdu: Sdu::Status(fwd),
                },
            );
            self.kick(m);
        }
    }

    // --- wrap-up --------------------------------------------------------

    fn finalize(mut self) -> RunMetrics {
        for i in 0..self.sc.nodes.len() {
            if self.sc.nodes[i].role != NodeRole::Sensor {
                continue;
            }
            let st = &mut self.nodes[i].icrp;
            if let Some(since) = st.uc_since.take() {
                st.uc_accum_micros += self.duration.saturating_sub(since).as_micros();
            }
            let fraction = (st.uc_accum_micros as f64 / self.duration.as_micros() as f64).min(1.0);
            self.metrics.per_source.insert(
                self.sc.nodes[i].name.clone(),
                SourceMetrics {
                    generated: self.generated_by[i],
                    delivered_unique: self.delivered_by[i],
                    uc_time_fraction: fraction,
                },
            );
        }
        self.metrics.trace_hash = self.hash;
        self.metrics
    }

    fn fold_trace(&mut self, ev: &Event) {
        let (code, a, b) = match ev.kind {
            EventKind::TxStart(n) => (1, n.0 as u64, 0),
            EventKind::TxEnd(n) => (2, n.0 as u64, 0),
            EventKind::ArrivalStart(id) => (3, id, 0),
            EventKind::ArrivalEnd(id) => (4, id, 0),
            EventKind::Timer(n, t) => match t {
                TimerKind::AckReady {
                    dest,
                    acked_seq,
                    tf,
                } => (
                    5,
                    n.0 as u64 ^ (dest.0 as u64) << 32,
                    acked_seq ^ (tf.index() as u64) << 56,
                ),
                TimerKind::AckTimeout => (6, n.0 as u64, 0),
                TimerKind::StatusWindow { origin, origin_seq } => {
                    (7, n.0 as u64 ^ (origin.0 as u64) << 32, origin_seq)
                }
                TimerKind::Measure { index } => (8, n.0 as u64, index),
                TimerKind::Emit { index } => (9, n.0 as u64, index),
            },
        };
        let mut h = self.hash;
        for v in [ev.time.as_micros(), code, a, b] {
            h = mix(h ^ v);
        }
        self.hash = h;
    }
}

/// splitmix64 finalizer; enough to make the trace digest order-sensitive.
fn mix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Builds and runs a simulator for the scenario in one call.
pub fn run_scenario(sc: Scenario) -> Result<RunMetrics, ScenarioError> {
    Ok(Simulator::new(sc)?.run())
}
