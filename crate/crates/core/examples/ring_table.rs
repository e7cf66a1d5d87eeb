//! Prints the delivery-ratio matrix of the default ring at the two
//! reporting intervals, one row per transport format and seed.
//!
//! ```text
//! cargo run --release -p uansim-core --example ring_table
//! ```

use uansim_core::sweep::{run_sweep, SweepSpec};
use uansim_core::{build_ring_scenario, TfId};

fn main() {
    let base = build_ring_scenario(600.0, 8, 4).expect("default ring");
    let spec = SweepSpec {
        intervals_s: vec![42.0, 18.0],
        tfs: TfId::ALL.to_vec(),
        seeds: (1..=5).collect(),
        parallel: true,
    };
    let start = std::time::Instant::now();
    let table = run_sweep(&base, &spec).expect("sweep");
    print!("{}", table.to_csv());
    eprintln!(
        "{} cells in {:.1} s",
        table.cells.len(),
        start.elapsed().as_secs_f64()
    );
}
