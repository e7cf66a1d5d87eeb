//! Acoustic propagation and receiver arbitration.
//!
//! Link budget follows the practical-loss model: geometric spreading
//! `10 * k * log10(d)` plus Thorp's frequency-dependent absorption, both in
//! dB re 1 uPa at 1 m. Interference is summed in linear power together with
//! the ambient noise floor, and a frame decodes only if its SINR stays at or
//! above the detection threshold for the whole arrival.

use serde::{Deserialize, Serialize};

use crate::time::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelParams {
    /// Carrier frequency in kHz (Thorp's formula expects kHz).
    pub frequency_khz: f64,
    /// Spreading coefficient k: 1 cylindrical, 2 spherical, 1.5 practical.
    pub spreading_coeff_k: f64,
    pub sound_speed_mps: f64,
    /// Ambient noise level in dB; also the carrier-detection floor.
    pub noise_level_db: f64,
    /// Minimum SINR in dB for a frame to decode.
    pub detect_threshold_db: f64,
}

impl Default for ChannelParams {
    fn default() -> ChannelParams {
        ChannelParams {
            frequency_khz: 25.0,
            spreading_coeff_k: 1.5,
            sound_speed_mps: 1500.0,
            noise_level_db: 50.0,
            detect_threshold_db: 10.0,
        }
    }
}

/// Tolerance applied to the decode comparison so a link calibrated to sit
/// exactly at the threshold is not lost to the last ulp of the link budget.
const SINR_MARGIN_DB: f64 = 1e-9;

/// Distances below one metre are treated as one metre; the log term is not
/// meaningful inside the reference distance.
const MIN_RANGE_M: f64 = 1.0;

/// Thorp absorption in dB/km for a frequency in kHz.
pub fn thorp_absorption_db_per_km(f_khz: f64) -> f64 {
    assert!(f_khz > 0.0, "frequency must be positive, got {f_khz} kHz");
    let f2 = f_khz * f_khz;
    0.11 * f2 / (1.0 + f2) + 44.0 * f2 / (4100.0 + f2) + 2.75e-4 * f2 + 0.003
}

/// One-way transmission loss in dB over `distance_m` metres.
pub fn transmission_loss_db(distance_m: f64, p: &ChannelParams) -> f64 {
    assert!(
        distance_m.is_finite() && distance_m >= 0.0,
        "distance must be finite and non-negative, got {distance_m}"
    );
    let d = distance_m.max(MIN_RANGE_M);
    10.0 * p.spreading_coeff_k * d.log10()
        + thorp_absorption_db_per_km(p.frequency_khz) * (d / 1000.0)
}

/// Received level in dB for a transmission at `source_level_db` heard over
/// `distance_m`, including any directivity gains at either end.
pub fn received_level_db(
    source_level_db: f64,
    distance_m: f64,
    tx_gain_db: f64,
    rx_gain_db: f64,
    p: &ChannelParams,
) -> f64 {
    source_level_db + tx_gain_db + rx_gain_db - transmission_loss_db(distance_m, p)
}

/// SINR in dB of a signal against the noise floor plus a set of interferer
/// received levels, all combined in linear power.
pub fn sinr_db(signal_rl_db: f64, interferer_rls_db: &[f64], noise_db: f64) -> f64 {
    let mut denom = 10f64.powf(noise_db / 10.0);
    for &i in interferer_rls_db {
        denom += 10f64.powf(i / 10.0);
    }
    signal_rl_db - 10.0 * denom.log10()
}

pub fn propagation_delay(distance_m: f64, p: &ChannelParams) -> SimTime {
    assert!(p.sound_speed_mps > 0.0);
    SimTime::from_secs(distance_m / p.sound_speed_mps)
}

/// One arrival at a receiver: its received level and the half-open interval
/// `[start, end)` during which it occupies the hydrophone.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArrivalWindow {
    pub rl_db: f64,
    pub start: SimTime,
    pub end: SimTime,
}

impl ArrivalWindow {
    fn overlaps(&self, other: &ArrivalWindow) -> bool {
        self.start < other.end && other.start < self.end
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LossReason {
    /// The receiver transmitted during some part of the arrival.
    HalfDuplex,
    /// The receiver was already locked onto an earlier arrival.
    CaptureBusy,
    LowSinr,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DecodeOutcome {
    Decoded {
        min_sinr_db: f64,
    },
    Lost {
        reason: LossReason,
        min_sinr_db: f64,
    },
}

impl DecodeOutcome {
    pub fn min_sinr_db(&self) -> f64 {
        match *self {
            DecodeOutcome::Decoded { min_sinr_db } => min_sinr_db,
            DecodeOutcome::Lost { min_sinr_db, .. } => min_sinr_db,
        }
    }
}

/// Decides the fate of one arrival given everything that overlapped it.
///
/// `rx_transmit_overlap` and `rx_capture_busy` are receiver-state facts
/// established while the arrival was in flight: whether the node transmitted
/// at any instant of the window, and whether a lock on an earlier arrival
/// prevented this one from being captured. The returned minimum SINR is taken
/// over the piecewise-constant interference profile of the whole window, so a
/// burst of interference anywhere inside the arrival is enough to lose it.
pub fn decode_outcome(
    signal: &ArrivalWindow,
    interferers: &[ArrivalWindow],
    rx_transmit_overlap: bool,
    rx_capture_busy: bool,
    p: &ChannelParams,
) -> DecodeOutcome {
    let min_sinr_db = min_sinr_over_window(signal, interferers, p.noise_level_db);
    let reason = if rx_transmit_overlap {
        Some(LossReason::HalfDuplex)
    } else if rx_capture_busy {
        Some(LossReason::CaptureBusy)
    } else if min_sinr_db < p.detect_threshold_db - SINR_MARGIN_DB {
        Some(LossReason::LowSinr)
    } else {
        None
    };
    match reason {
        Some(reason) => DecodeOutcome::Lost {
            reason,
            min_sinr_db,
        },
        None => DecodeOutcome::Decoded { min_sinr_db },
    }
}

/// Minimum instantaneous SINR of `signal` across its window. Interference is
/// piecewise constant, changing only where an interferer starts or ends, so
/// the minimum is found by sweeping those boundaries.
fn min_sinr_over_window(
    signal: &ArrivalWindow,
    interferers: &[ArrivalWindow],
    noise_db: f64,
) -> f64 {
    let active: Vec<&ArrivalWindow> = interferers.iter().filter(|w| w.overlaps(signal)).collect();
    if active.is_empty() {
        return sinr_db(signal.rl_db, &[], noise_db);
    }
    let mut cuts: Vec<SimTime> = vec![signal.start];
    for w in &active {
        for t in [w.start, w.end] {
            if t > signal.start && t < signal.end {
                cuts.push(t);
            }
        }
    }
    cuts.sort_unstable();
    cuts.dedup();

    let noise_lin = 10f64.powf(noise_db / 10.0);
    let mut worst_denom = 0f64;
    for &t in &cuts {
        // Power present in the half-open segment starting at t.
        let denom: f64 = active
            .iter()
            .filter(|w| w.start <= t && t < w.end)
            .map(|w| 10f64.powf(w.rl_db / 10.0))
            .sum();
        worst_denom = worst_denom.max(denom);
    }
    signal.rl_db - 10.0 * (noise_lin + worst_denom).log10()
}
