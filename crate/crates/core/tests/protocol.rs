//! Protocol-level properties checked on scripted channels.
//!
//! The receive filter severs chosen frames deterministically (a scripted
//! loss pattern), and the transmit observer counts what actually went on
//! the air, so each property pins an exact transmission count instead of
//! a statistical tendency.

use std::cell::RefCell;
use std::collections::HashMap;
use std::rc::Rc;

use uansim_core::mac::{FrameKind, Sdu};
use uansim_core::scenario::{NodeConfig, NodeRole};
use uansim_core::sweep::cell_scenario;
use uansim_core::{build_ring_scenario, NodeId, Scenario, Simulator, TfId};

/// Sink at the origin and one sensor inside single-hop range, emitting on
/// a fixed schedule with no phase offset, so packets leave at t = 0,
/// interval, 2 interval, and so on.
fn pair(interval_s: f64, duration_s: f64) -> Scenario {
    let mut sc = Scenario::with_nodes(vec![
        NodeConfig::new("sink", NodeRole::Sink, 0.0, 0.0),
        NodeConfig::new("s1", NodeRole::Sensor, 600.0, 0.0),
    ]);
    sc.duration_s = duration_s;
    sc.traffic.constant_interval_s = Some(interval_s);
    sc.traffic.phase_offsets = false;
    sc
}

/// Transmitted unicast data frames for one origin sequence number.
fn uc_tx_of(counts: &HashMap<(u32, u64), u64>, origin: NodeId, seq: u64) -> u64 {
    counts.get(&(origin.0, seq)).copied().unwrap_or(0)
}

fn count_uc_tx(sim: &mut Simulator) -> Rc<RefCell<HashMap<(u32, u64), u64>>> {
    let counts = Rc::new(RefCell::new(HashMap::new()));
    let sink = counts.clone();
    sim.set_tx_observer(move |tx| {
        if tx.frame.kind == FrameKind::DataUc {
            if let Sdu::Data(p) = &tx.frame.sdu {
                *sink
                    .borrow_mut()
                    .entry((p.origin.0, p.origin_seq))
                    .or_insert(0) += 1;
            }
        }
    });
    counts
}

#[test]
fn arq_sends_exactly_the_retry_budget_under_total_ack_loss() {
    // Two emissions: the first establishes the route, the second runs a
    // unicast transaction whose acks never decode at the sender.
    let mut sc = pair(30.0, 40.0);
    sc.icrp.patience = 1;
    let s1 = sc.node_id("s1").unwrap();
    let retries = sc.mac.max_retx as u64;

    let mut sim = Simulator::new(sc).unwrap();
    sim.set_rx_filter(move |rx| !(rx.frame.kind == FrameKind::MacAck && rx.dst == s1));
    let counts = count_uc_tx(&mut sim);
    let m = sim.run();

    assert_eq!(
        uc_tx_of(&counts.borrow(), s1, 2),
        retries + 1,
        "budget is 1 + max_retx"
    );
    assert_eq!(m.uc_failed, 1);
    assert_eq!(
        m.routes_invalidated, 1,
        "patience 1 abandons the route at once"
    );
    assert_eq!(m.bc_fallbacks, 1);
    // The data frames themselves decoded fine, so the payload still
    // arrived and the fallback copy was a duplicate.
    assert_eq!(m.delivered_unique, 2);
    assert_eq!(m.status_sent, 1);
    // The sink acked the first attempt and re-acked each duplicate.
    assert_eq!(m.ack_tx, retries + 1);
    assert_eq!(m.link_duplicates, retries);
}

#[test]
fn patience_invalidates_on_exactly_the_nth_consecutive_failure() {
    let mut sc = pair(30.0, 40.0);
    sc.icrp.patience = 2;
    let s1 = sc.node_id("s1").unwrap();
    let per_txn = sc.mac.max_retx as u64 + 1;

    let mut sim = Simulator::new(sc).unwrap();
    sim.set_rx_filter(move |rx| !(rx.frame.kind == FrameKind::MacAck && rx.dst == s1));
    let counts = count_uc_tx(&mut sim);
    let m = sim.run();

    // One full transaction per tolerated failure before the route goes:
    // fewer transmissions would mean the route fell early, more would
    // mean patience stretched past P.
    assert_eq!(uc_tx_of(&counts.borrow(), s1, 2), 2 * per_txn);
    assert_eq!(m.uc_failed, 2);
    assert_eq!(m.routes_invalidated, 1);
    assert_eq!(m.bc_fallbacks, 1);
    assert_eq!(m.delivered_unique, 2);
}

#[test]
fn success_resets_the_patience_counter() {
    // Drop acks for one transaction only: the route must survive a
    // single failure at patience 2, deliver the next packets over
    // unicast, and never fall back.
    let mut sc = pair(30.0, 160.0);
    sc.icrp.patience = 2;
    let s1 = sc.node_id("s1").unwrap();

    let mut sim = Simulator::new(sc).unwrap();
    let blocked = Rc::new(RefCell::new(0u64));
    let flag = blocked.clone();
    sim.set_rx_filter(move |rx| {
        if rx.frame.kind == FrameKind::MacAck && rx.dst == s1 {
            if let Sdu::Ack { acked_seq } = rx.frame.sdu {
                // The second unicast transaction on this link.
                if acked_seq == 2 {
                    *flag.borrow_mut() += 1;
                    return false;
                }
            }
        }
        true
    });
    let m = sim.run();

    assert!(*blocked.borrow() > 0, "the scripted drop must have fired");
    assert_eq!(m.uc_failed, 1);
    assert_eq!(m.routes_invalidated, 0, "one failure is within patience");
    assert_eq!(m.bc_fallbacks, 0);
    assert_eq!(m.delivered_unique, m.generated);
    assert_eq!(m.status_sent, 1);
}

#[test]
fn rate_adaptation_steps_up_after_exactly_s_successes() {
    let mut sc = pair(30.0, 130.0);
    for node in &mut sc.nodes {
        node.initial_tf = TfId::Tf2;
    }
    let s1 = sc.node_id("s1").unwrap();
    let ups = sc.icrp.rate_up_successes as usize;

    let mut sim = Simulator::new(sc).unwrap();
    let tfs = Rc::new(RefCell::new(Vec::new()));
    let log = tfs.clone();
    sim.set_tx_observer(move |tx| {
        if tx.frame.kind == FrameKind::DataUc && tx.src == s1 {
            log.borrow_mut().push(tx.frame.tf);
        }
    });
    let m = sim.run();

    let tfs = tfs.borrow();
    // Emissions at 0..120 s: one broadcast, then four unicast
    // transactions, none retransmitted.
    assert_eq!(tfs.len(), 4);
    assert_eq!(m.uc_acked, 4);
    for (i, tf) in tfs.iter().enumerate() {
        let expect = if i < ups { TfId::Tf2 } else { TfId::Tf3 };
        assert_eq!(*tf, expect, "transaction {} at {:?}", i + 1, tf);
    }
}

#[test]
fn repeated_failures_step_the_rate_down() {
    // Acks are dropped from the third unicast transaction on. Patience
    // is raised so the route survives while the link rate walks down.
    let mut sc = pair(30.0, 220.0);
    sc.icrp.patience = 50;
    for node in &mut sc.nodes {
        node.initial_tf = TfId::Tf2;
    }
    let s1 = sc.node_id("s1").unwrap();

    let mut sim = Simulator::new(sc).unwrap();
    sim.set_rx_filter(move |rx| {
        if rx.frame.kind == FrameKind::MacAck && rx.dst == s1 {
            if let Sdu::Ack { acked_seq } = rx.frame.sdu {
                return acked_seq < 3;
            }
        }
        true
    });
    let tfs = Rc::new(RefCell::new(Vec::new()));
    let log = tfs.clone();
    sim.set_tx_observer(move |tx| {
        if tx.frame.kind == FrameKind::DataUc && tx.src == s1 {
            log.borrow_mut().push((tx.frame.tf, tx.frame.link_seq));
        }
    });
    let m = sim.run();

    // First failed transaction drops TF2 to TF1; later ones stay on the
    // floor.
    let tfs = tfs.borrow();
    let first_per_txn: Vec<TfId> = {
        let mut seen = std::collections::HashSet::new();
        tfs.iter()
            .filter(|(_, seq)| seen.insert(*seq))
            .map(|(tf, _)| *tf)
            .collect()
    };
    assert_eq!(first_per_txn[0], TfId::Tf2);
    assert_eq!(first_per_txn[1], TfId::Tf2);
    assert_eq!(
        first_per_txn[2],
        TfId::Tf2,
        "failure feedback lands after the transaction"
    );
    for tf in &first_per_txn[3..] {
        assert_eq!(*tf, TfId::Tf1);
    }
    assert!(m.uc_failed >= 2);
    assert_eq!(m.routes_invalidated, 0);
}

#[test]
fn sink_delivers_exactly_once_under_forced_duplication() {
    // The first ack of each unicast transaction is dropped, so every
    // packet is transmitted twice and the sink sees every payload twice.
    let sc = pair(30.0, 160.0);
    let s1 = sc.node_id("s1").unwrap();

    let mut sim = Simulator::new(sc).unwrap();
    let dropped = Rc::new(RefCell::new(std::collections::HashSet::new()));
    let mem = dropped.clone();
    sim.set_rx_filter(move |rx| {
        if rx.frame.kind == FrameKind::MacAck && rx.dst == s1 {
            if let Sdu::Ack { acked_seq } = rx.frame.sdu {
                if mem.borrow_mut().insert(acked_seq) {
                    return false;
                }
            }
        }
        true
    });
    let m = sim.run();

    assert_eq!(m.generated, 6);
    assert_eq!(
        m.delivered_unique, 6,
        "every payload reaches the application once"
    );
    assert_eq!(m.delivered_total, 6, "duplicates stop at the link layer");
    assert_eq!(
        m.link_duplicates, 5,
        "each unicast packet was received twice"
    );
    assert_eq!(m.uc_failed, 0);
    assert_eq!(m.routes_invalidated, 0);
}

#[test]
fn forward_once_and_hop_limit_hold_under_saturating_load() {
    // A congested ring at the slowest format exercises floods, fallbacks
    // and collisions across tens of thousands of packets. Every broadcast
    // copy of a packet must come from a distinct node, and no frame may
    // carry a hop count at or past the limit.
    let base = build_ring_scenario(600.0, 8, 4).unwrap();
    let nodes = base.nodes.len() as u64;
    let hop_limit = base.icrp.hop_limit;
    let mut total_packets = 0;

    for seed in 1..=2 {
        let mut sc = cell_scenario(&base, 6.0, TfId::Tf1, seed);
        sc.duration_s = 5400.0;

        let mut sim = Simulator::new(sc).unwrap();
        let bc_tx = Rc::new(RefCell::new(HashMap::<(u32, u64), u64>::new()));
        let worst_hop = Rc::new(RefCell::new(0u32));
        let bc = bc_tx.clone();
        let hops = worst_hop.clone();
        sim.set_tx_observer(move |tx| {
            if let Sdu::Data(p) = &tx.frame.sdu {
                let mut worst = hops.borrow_mut();
                *worst = (*worst).max(p.hop_count);
                if tx.frame.kind == FrameKind::DataBc {
                    *bc.borrow_mut()
                        .entry((p.origin.0, p.origin_seq))
                        .or_insert(0) += 1;
                }
            }
        });
        let m = sim.run();
        total_packets += m.generated;

        let bc_tx = bc_tx.borrow();
        let heaviest = bc_tx.values().max().copied().unwrap_or(0);
        assert!(
            heaviest <= nodes,
            "seed {seed}: a packet was broadcast {heaviest} times across {nodes} nodes"
        );
        assert!(
            *worst_hop.borrow() < hop_limit,
            "seed {seed}: hop count {} reached the limit {hop_limit}",
            worst_hop.borrow()
        );
    }
    assert!(
        total_packets >= 10_000,
        "only {total_packets} packets exercised"
    );
}

#[test]
fn choked_sensors_never_forward_foreign_broadcasts() {
    let mut sc = build_ring_scenario(600.0, 8, 4).unwrap();
    sc.duration_s = 1800.0;
    sc.traffic.constant_interval_s = Some(18.0);
    for node in &mut sc.nodes {
        if node.role == NodeRole::Sensor {
            node.bc_forwarding = false;
        }
    }
    let sensors: std::collections::HashSet<u32> = sc.sensors().map(|n| n.0).collect();

    let mut sim = Simulator::new(sc).unwrap();
    let violations = Rc::new(RefCell::new(0u64));
    let seen = violations.clone();
    sim.set_tx_observer(move |tx| {
        if tx.frame.kind == FrameKind::DataBc {
            if let Sdu::Data(p) = &tx.frame.sdu {
                // A sensor's broadcast must be its own packet, fallback
                // conversions of its own traffic included.
                if sensors.contains(&tx.src.0) && p.origin != tx.src {
                    *seen.borrow_mut() += 1;
                }
            }
        }
    });
    let m = sim.run();

    assert_eq!(*violations.borrow(), 0);
    assert!(m.delivered_unique > 0, "the choked network still delivers");
}

#[test]
fn expired_routes_fall_back_to_discovery() {
    // Lifetime shorter than two intervals: every second emission finds
    // its route expired, floods again and triggers a fresh status reply.
    let mut sc = pair(30.0, 160.0);
    sc.icrp.route_lifetime_s = Some(50.0);
    let m = uansim_core::run_scenario(sc).unwrap();

    assert_eq!(m.generated, 6);
    assert_eq!(m.delivered_unique, 6);
    // Emissions at 0, 60 and 120 s find no live route and discover;
    // 30, 90 and 150 s ride the freshly installed routes.
    assert_eq!(m.status_sent, 3);
    assert_eq!(m.delivered_bc, 3);
    assert_eq!(m.delivered_uc, 3);
    assert_eq!(m.routes_installed, 3);
}

#[test]
fn status_walks_the_reverse_path_and_installs_suffix_routes() {
    // Sink, relay at 600 m, sensor at 1200 m beyond it: the sensor's
    // flood reaches the sink both direct (marginal) and relayed
    // (strong), the status reply installs routes at the relay and the
    // origin, and traffic then flows as two-hop unicast.
    let mut sc = Scenario::with_nodes(vec![
        NodeConfig::new("sink", NodeRole::Sink, 0.0, 0.0),
        NodeConfig::new("r1", NodeRole::Relay, 600.0, 0.0),
        NodeConfig::new("s1", NodeRole::Sensor, 1200.0, 0.0),
    ]);
    sc.duration_s = 130.0;
    sc.traffic.constant_interval_s = Some(30.0);
    sc.traffic.phase_offsets = false;
    let s1 = sc.node_id("s1").unwrap();
    let r1 = sc.node_id("r1").unwrap();

    let mut sim = Simulator::new(sc).unwrap();
    let status_dsts = Rc::new(RefCell::new(Vec::new()));
    let log = status_dsts.clone();
    sim.set_tx_observer(move |tx| {
        if tx.frame.kind == FrameKind::StatusUc {
            log.borrow_mut().push((tx.src.0, tx.frame.dest));
        }
    });
    let m = sim.run();

    // One status originated by the sink, forwarded once by the relay.
    assert_eq!(m.status_sent, 1);
    assert_eq!(m.status_tx, 2);
    let dsts = status_dsts.borrow();
    assert_eq!(dsts.len(), 2);
    assert_eq!(dsts[0], (0, uansim_core::mac::Dest::Node(r1)));
    assert_eq!(dsts[1], (r1.0, uansim_core::mac::Dest::Node(s1)));
    assert_eq!(
        m.routes_installed, 2,
        "relay and origin each learn a suffix"
    );
    assert_eq!(m.delivered_unique, m.generated);
    // Two-hop unicast: each later packet is acked on both hops.
    assert_eq!(m.delivered_uc, 4);
    assert_eq!(m.uc_acked, 8);
}

#[test]
fn queue_overflow_drops_oldest_and_counts() {
    // A sensor forced to emit every second at the slowest format cannot
    // drain its queue; the bounded queue must shed load instead of
    // growing without bound.
    let mut sc = pair(1.0, 600.0);
    sc.mac.queue_capacity = 4;
    let m = uansim_core::run_scenario(sc).unwrap();

    assert!(m.mac_queue_drops > 0);
    // Generated counts emissions, not queue admissions, so the drop
    // count stays visible in the delivery ratio.
    assert!(m.delivered_unique < m.generated);
}
