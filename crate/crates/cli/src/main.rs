//! Command line front end for the simulator: run one scenario, sweep a
//! parameter grid, or validate a scenario file and print its link budget.
//!
//! Every subcommand exits zero on success and nonzero with a one-line
//! diagnostic on standard error otherwise, so shells and batch scripts
//! can chain invocations safely.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use uansim_core::channel;
use uansim_core::sweep::{run_sweep, SweepSpec};
use uansim_core::{frame_duration_s, run_scenario, Scenario, TfId};

#[derive(Parser)]
#[command(
    name = "uansim",
    version,
    about = "Discrete-event simulator for underwater acoustic sensor networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and print the metrics summary.
    Run(RunArgs),
    /// Run an interval x format x seed grid and emit a result table.
    Sweep(SweepArgs),
    /// Check a scenario file and print the derived link budget.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file (TOML).
    #[arg(long)]
    scenario: PathBuf,
    /// Override the file's random seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the file's run length in seconds.
    #[arg(long)]
    duration: Option<f64>,
    /// Write the full metrics to this file as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Scenario file providing the layout and fixed parameters.
    #[arg(long)]
    scenario: PathBuf,
    /// Reporting intervals in seconds, one grid column per value.
    #[arg(long, value_delimiter = ',',
          default_values_t = [6.0, 12.0, 18.0, 24.0, 30.0, 42.0, 60.0, 90.0, 120.0])]
    intervals: Vec<f64>,
    /// Transport formats to pin the whole network to (TF1, TF2, TF3).
    #[arg(long, value_delimiter = ',', value_parser = parse_tf, default_values_t = TfId::ALL)]
    tfs: Vec<TfId>,
    /// Seeds; every (interval, format) cell runs once per seed.
    #[arg(long, value_delimiter = ',', default_values_t = [1, 2, 3, 4, 5])]
    seeds: Vec<u64>,
    /// Run cells one after another instead of across worker threads.
    #[arg(long)]
    serial: bool,
    /// Write the table to this file instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    /// Scenario file (TOML).
    #[arg(long)]
    scenario: PathBuf,
}

fn parse_tf(s: &str) -> Result<TfId, String> {
    match s.to_ascii_uppercase().as_str() {
        "TF1" | "1" => Ok(TfId::Tf1),
        "TF2" | "2" => Ok(TfId::Tf2),
        "TF3" | "3" => Ok(TfId::Tf3),
        other => Err(format!(
            "unknown transport format {other:?}; expected TF1, TF2 or TF3"
        )),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run_cmd(args),
        Command::Sweep(args) => sweep_cmd(args),
        Command::Validate(args) => validate_cmd(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}

fn load(path: &Path) -> Result<Scenario, String> {
    Scenario::load(path).map_err(|e| e.to_string())
}

fn write_out(path: &Path, text: &str) -> Result<(), String> {
    std::fs::write(path, text).map_err(|e| format!("cannot write {}: {e}", path.display()))
}

fn run_cmd(args: RunArgs) -> Result<(), String> {
    let mut sc = load(&args.scenario)?;
    if let Some(seed) = args.seed {
        sc.seed = seed;
    }
    if let Some(duration) = args.duration {
        sc.duration_s = duration;
    }
    let metrics = run_scenario(sc).map_err(|e| e.to_string())?;
    println!("{metrics}");
    if let Some(path) = args.out {
        let json = serde_json::to_string_pretty(&metrics).map_err(|e| e.to_string())?;
        write_out(&path, &(json + "\n"))?;
    }
    Ok(())
}

fn sweep_cmd(args: SweepArgs) -> Result<(), String> {
    let sc = load(&args.scenario)?;
    let spec = SweepSpec {
        intervals_s: args.intervals,
        tfs: args.tfs,
        seeds: args.seeds,
        parallel: !args.serial,
    };
    let table = run_sweep(&sc, &spec).map_err(|e| e.to_string())?;
    let csv = table.to_csv();
    match args.out {
        Some(path) => write_out(&path, &csv)?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn validate_cmd(args: ValidateArgs) -> Result<(), String> {
    let sc = load(&args.scenario)?;
    let p = &sc.channel;
    let sl = sc.source_level_db();
    let calibrated = if sc.modem.source_level_db.is_none() {
        " (calibrated)"
    } else {
        ""
    };

    let sensors = sc.sensors().count();
    let relays = sc.nodes.len() - sensors - 1;
    println!("scenario             {}", args.scenario.display());
    println!(
        "nodes                {} total: sink {:?}, {} relays, {} sensors",
        sc.nodes.len(),
        sc.name(sc.sink()),
        relays,
        sensors
    );
    println!("duration             {} s, seed {}", sc.duration_s, sc.seed);
    println!(
        "carrier              {} kHz, absorption {:.3} dB/km",
        p.frequency_khz,
        channel::thorp_absorption_db_per_km(p.frequency_khz)
    );
    println!("source level         {sl:.2} dB{calibrated}");
    println!(
        "noise / threshold    {} dB / {} dB",
        p.noise_level_db, p.detect_threshold_db
    );

    // One budget row per distinct node-to-sink range, plus the longest
    // cross-network path, which shows what the MAC can and cannot hear.
    let sink = sc.sink();
    let mut ranges: Vec<f64> = (0..sc.nodes.len())
        .map(|i| sc.distance_m(uansim_core::scenario::NodeId(i as u32), sink))
        .filter(|&d| d > 0.0)
        .collect();
    ranges.push(sc.max_pair_range_m());
    ranges.sort_by(f64::total_cmp);
    ranges.dedup_by(|a, b| (*a - *b).abs() < 0.1);

    println!();
    println!("   range        loss    received      margin");
    for d in ranges {
        let tl = channel::transmission_loss_db(d, p);
        let rl = channel::received_level_db(sl, d, 0.0, 0.0, p);
        let margin = channel::sinr_db(rl, &[], p.noise_level_db) - p.detect_threshold_db;
        println!("{d:>7.0} m  {tl:>7.2} dB  {rl:>7.2} dB  {margin:>+7.2} dB");
    }

    println!();
    println!(
        "frame durations for {} payload bits:",
        sc.traffic.payload_bits
    );
    for tf in TfId::ALL {
        println!(
            "  {tf}  {:>6.3} s data, {:>6.3} s ack",
            frame_duration_s(sc.traffic.payload_bits, tf, &sc.modem),
            frame_duration_s(sc.modem.ack_bits, tf, &sc.modem)
        );
    }
    println!();
    println!("scenario ok");
    Ok(())
}
