//! Batch experiments over traffic interval, transport format and seed.
//!
//! Each cell of the grid runs the base scenario with three overrides: the
//! sensors emit at one constant interval, every node starts at the cell's
//! transport format, and rate adaptation is switched off. Pinning the rate
//! keeps the cell's delivery ratio attributable to that one format instead
//! of wherever the adaptive scheme happened to settle.
//!
//! Cells are independent single-threaded runs, so the runner may spread
//! them over a thread pool. Rows are sorted by (interval, format, seed)
//! before emission and all floating point output is printed to six
//! significant digits, which makes the rendered table a stable byte string
//! suitable for golden-file comparisons.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::engine::run_scenario;
use crate::modem::TfId;
use crate::scenario::{Scenario, ScenarioError};

/// Grid definition for [`run_sweep`].
#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub intervals_s: Vec<f64>,
    pub tfs: Vec<TfId>,
    pub seeds: Vec<u64>,
    /// Run cells on the rayon pool; the result is identical either way.
    pub parallel: bool,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            intervals_s: vec![6.0, 12.0, 18.0, 24.0, 30.0, 42.0, 60.0, 90.0, 120.0],
            tfs: TfId::ALL.to_vec(),
            seeds: (1..=5).collect(),
            parallel: true,
        }
    }
}

/// One completed run of the grid. `error` carries a per-cell failure
/// message instead of aborting the whole sweep; the numeric fields are
/// zero in that case.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub interval_s: f64,
    pub tf: TfId,
    pub seed: u64,
    pub generated: u64,
    pub delivered_unique: u64,
    pub pdr_pct: f64,
    pub status_pct: f64,
    pub error: Option<String>,
}

/// Seed-averaged summary of one (interval, format) group. Standard
/// deviations are the sample kind and zero for a single run.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepAggregate {
    pub interval_s: f64,
    pub tf: TfId,
    /// Cells that finished without error and contributed to the means.
    pub runs: usize,
    pub generated_mean: f64,
    pub delivered_mean: f64,
    pub pdr_mean_pct: f64,
    pub pdr_stddev_pct: f64,
    pub status_mean_pct: f64,
    pub status_stddev_pct: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    /// Sorted by (interval, format, seed).
    pub cells: Vec<SweepCell>,
    /// Sorted by (interval, format); groups where every cell failed are
    /// omitted.
    pub aggregates: Vec<SweepAggregate>,
}

impl SweepTable {
    pub fn cell(&self, interval_s: f64, tf: TfId, seed: u64) -> Option<&SweepCell> {
        self.cells
            .iter()
            .find(|c| c.interval_s == interval_s && c.tf == tf && c.seed == seed)
    }

    pub fn aggregate(&self, interval_s: f64, tf: TfId) -> Option<&SweepAggregate> {
        self.aggregates
            .iter()
            .find(|a| a.interval_s == interval_s && a.tf == tf)
    }

    /// Renders the table as comma-separated text: one header row, one row
    /// per cell, and one mean row per (interval, format) group placed
    /// right after the seeds it summarises. The output is byte-identical
    /// across runs of the same grid.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(
            "interval_s,tf,seed,generated,delivered_unique,pdr_pct,status_pct,\
             pdr_stddev_pct,status_stddev_pct,error\n",
        );
        for cell in &self.cells {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},,,{}",
                cell.interval_s,
                cell.tf,
                cell.seed,
                cell.generated,
                cell.delivered_unique,
                fmt_sig(cell.pdr_pct),
                fmt_sig(cell.status_pct),
                cell.error.as_deref().map(sanitize).unwrap_or_default(),
            );
            let group_done = self
                .cells
                .iter()
                .rev()
                .find(|c| c.interval_s == cell.interval_s && c.tf == cell.tf)
                .map(|c| c.seed == cell.seed)
                .unwrap_or(false);
            if group_done {
                if let Some(agg) = self.aggregate(cell.interval_s, cell.tf) {
                    let _ = writeln!(
                        out,
                        "{},{},mean,{},{},{},{},{},{},",
                        agg.interval_s,
                        agg.tf,
                        fmt_sig(agg.generated_mean),
                        fmt_sig(agg.delivered_mean),
                        fmt_sig(agg.pdr_mean_pct),
                        fmt_sig(agg.status_mean_pct),
                        fmt_sig(agg.pdr_stddev_pct),
                        fmt_sig(agg.status_stddev_pct),
                    );
                }
            }
        }
        out
    }
}

/// The base scenario with one grid cell's overrides applied.
pub fn cell_scenario(base: &Scenario, interval_s: f64, tf: TfId, seed: u64) -> Scenario {
    let mut sc = base.clone();
    sc.traffic.constant_interval_s = Some(interval_s);
    for node in &mut sc.nodes {
        node.initial_tf = tf;
    }
    sc.icrp.rate_adaptation = false;
    sc.seed = seed;
    sc
}

/// Runs every (interval, format, seed) combination of `spec` against
/// `base` and collects the table. Cell failures land in their row's
/// `error` field; only empty grid lists are an error here.
pub fn run_sweep(base: &Scenario, spec: &SweepSpec) -> Result<SweepTable, ScenarioError> {
    if spec.intervals_s.is_empty() || spec.tfs.is_empty() || spec.seeds.is_empty() {
        return Err(ScenarioError::BadValue {
            field: "sweep",
            message: "intervals, formats and seeds must all be non-empty".into(),
        });
    }

    let mut keys = Vec::new();
    for &interval in &spec.intervals_s {
        for &tf in &spec.tfs {
            for &seed in &spec.seeds {
                keys.push((interval, tf, seed));
            }
        }
    }

    let run_cell = |&(interval, tf, seed): &(f64, TfId, u64)| -> SweepCell {
        let mut cell = SweepCell {
            interval_s: interval,
            tf,
            seed,
            generated: 0,
            delivered_unique: 0,
            pdr_pct: 0.0,
            status_pct: 0.0,
            error: None,
        };
        match run_scenario(cell_scenario(base, interval, tf, seed)) {
            Ok(m) => match (m.pdr_pct(), m.status_pct()) {
                (Some(pdr), Some(status)) => {
                    cell.generated = m.generated;
                    cell.delivered_unique = m.delivered_unique;
                    cell.pdr_pct = pdr;
                    cell.status_pct = status;
                }
                _ => cell.error = Some("no packets generated".into()),
            },
            Err(e) => cell.error = Some(e.to_string()),
        }
        cell
    };

    let mut cells: Vec<SweepCell> = if spec.parallel {
        keys.par_iter().map(run_cell).collect()
    } else {
        keys.iter().map(run_cell).collect()
    };
    cells.sort_by(|a, b| {
        a.interval_s
            .total_cmp(&b.interval_s)
            .then(a.tf.index().cmp(&b.tf.index()))
            .then(a.seed.cmp(&b.seed))
    });
    let aggregates = aggregate_cells(&cells);
    Ok(SweepTable { cells, aggregates })
}

/// Groups sorted cells by (interval, format) and averages the runs that
/// finished cleanly.
fn aggregate_cells(cells: &[SweepCell]) -> Vec<SweepAggregate> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < cells.len() {
        let (interval, tf) = (cells[i].interval_s, cells[i].tf);
        let mut j = i;
        while j < cells.len() && cells[j].interval_s == interval && cells[j].tf == tf {
            j += 1;
        }
        let ok: Vec<&SweepCell> = cells[i..j].iter().filter(|c| c.error.is_none()).collect();
        if !ok.is_empty() {
            let n = ok.len() as f64;
            let mean = |f: &dyn Fn(&SweepCell) -> f64| ok.iter().map(|c| f(c)).sum::<f64>() / n;
            let stddev = |f: &dyn Fn(&SweepCell) -> f64, m: f64| {
                if ok.len() < 2 {
                    0.0
                } else {
                    (ok.iter().map(|c| (f(c) - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
                }
            };
            let pdr_mean = mean(&|c| c.pdr_pct);
            let status_mean = mean(&|c| c.status_pct);
            out.push(SweepAggregate {
                interval_s: interval,
                tf,
                runs: ok.len(),
                generated_mean: mean(&|c| c.generated as f64),
                delivered_mean: mean(&|c| c.delivered_unique as f64),
                pdr_mean_pct: pdr_mean,
                pdr_stddev_pct: stddev(&|c| c.pdr_pct, pdr_mean),
                status_mean_pct: status_mean,
                status_stddev_pct: stddev(&|c| c.status_pct, status_mean),
            });
        }
        i = j;
    }
    out
}

/// Six significant digits, plain decimal notation. Zero prints as `0` so
/// integral counters stay readable.
fn fmt_sig(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = (5 - magnitude).clamp(0, 12) as usize;
    format!("{x:.decimals$}")
}

/// Commas would shift CSV columns, so error text swaps them out.
fn sanitize(msg: &str) -> String {
    msg.replace([',', '\n'], ";")
}
