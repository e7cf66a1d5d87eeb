//! Deterministic discrete-event simulator for underwater acoustic sensor
//! networks.
//!
//! The simulated stack, bottom to top:
//!
//! * [`channel`]: frequency-dependent absorption, spreading loss, ambient
//!   noise and an SINR-based capture model for colliding arrivals.
//! * [`modem`]: three fixed transport formats (200, 400 and 1700 bit/s),
//!   frame timing and source-level calibration against a design range.
//! * [`mac`]: carrier-sensing Aloha with random backoff and a
//!   stop-and-wait acknowledgement scheme for unicast frames.
//! * [`icrp`]: reactive routing that floods data toward the sink until a
//!   status report installs a unicast route, with per-link rate
//!   adaptation and a patience counter that falls back to flooding.
//! * [`traffic`]: periodic measurement sources with decimated emission
//!   and alarm windows that raise the reporting rate.
//!
//! [`engine::Simulator`] ties those together over a single event queue.
//! Every run is reproducible: one seeded generator drives all randomness,
//! events are totally ordered, and [`metrics::RunMetrics::trace_hash`]
//! digests the full event sequence so two runs can be compared byte for
//! byte. [`sweep`] builds on that to run whole parameter grids in
//! parallel with stable output.
//!
//! ```
//! use uansim_core::{build_ring_scenario, run_scenario};
//!
//! let mut sc = build_ring_scenario(600.0, 8, 4).unwrap();
//! sc.duration_s = 600.0;
//! let metrics = run_scenario(sc).unwrap();
//! assert!(metrics.generated > 0);
//! ```

pub mod channel;
pub mod engine;
pub mod event;
pub mod icrp;
pub mod mac;
pub mod metrics;
pub mod modem;
pub mod scenario;
pub mod sweep;
pub mod time;
pub mod traffic;

pub use engine::{run_scenario, RxRecord, Simulator, TxRecord};
pub use metrics::{LossCounters, RunMetrics, SourceMetrics};
pub use modem::{calibrate_source_level_db, frame_duration_s, ModemConfig, TfId};
pub use scenario::{build_ring_scenario, NodeConfig, NodeId, NodeRole, Scenario, ScenarioError};
pub use sweep::{run_sweep, SweepSpec, SweepTable};
pub use time::SimTime;
