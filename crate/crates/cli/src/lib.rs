//! Command-line front end: argument parsing, run/sweep drivers and output.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use sdsim_core::scenario::{build_simulation, series_csv, sweep_csv, MAX_CONSUMERS, MAX_PRODUCERS, MAX_SWITCHES};
use sdsim_core::{run_sweep, Mode, ScenarioConfig, SimError, SimTime, SweepGrid, SweepResult, Timing};

#[derive(Debug, Parser)]
#[command(
    name = "sdsim",
    version,
    about = "Simulate SOME/IP service discovery over Ethernet and SDN-controlled switch chains"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one scenario and print its setup time
    Run(RunArgs),
    /// Run every combination of a parameter grid and write CSV files
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Network mode: ethernet, sdn-vanilla or sdn-optimized
    #[arg(long, default_value = "sdn-optimized")]
    pub mode: Mode,

    /// Switches in the chain between producers and consumers
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u64).range(1..=MAX_SWITCHES as u64))]
    pub switches: u64,

    /// Producer hosts, each offering one service
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..=MAX_PRODUCERS as u64))]
    pub producers: u64,

    /// Consumer hosts, each subscribing to every producer
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..=MAX_CONSUMERS as u64))]
    pub consumers: u64,

    /// Write the event trace to this file
    #[arg(long, value_name = "PATH")]
    pub trace: Option<PathBuf>,

    /// Also write sweep.csv and the series file for this run into DIR
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,

    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Modes to sweep
    #[arg(long, value_delimiter = ',', default_value = "ethernet,sdn-optimized,sdn-vanilla")]
    pub modes: Vec<Mode>,

    /// Switch counts to sweep
    #[arg(long, value_delimiter = ',', default_value = "1,2,5", value_parser = clap::value_parser!(u64).range(1..=MAX_SWITCHES as u64))]
    pub switches: Vec<u64>,

    /// Producer counts to sweep
    #[arg(long, value_delimiter = ',', default_value = "1,5,10,15,20,30,40,50", value_parser = clap::value_parser!(u64).range(1..=MAX_PRODUCERS as u64))]
    pub producers: Vec<u64>,

    /// Consumer counts to sweep
    #[arg(long, value_delimiter = ',', default_value = "1,5,10,15,20,30,40,50", value_parser = clap::value_parser!(u64).range(1..=MAX_CONSUMERS as u64))]
    pub consumers: Vec<u64>,

    /// Output directory for sweep.csv and the per-series files
    #[arg(long, value_name = "DIR", default_value = "results")]
    pub out: PathBuf,

    /// Parallel runs (0 = one per CPU core)
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,

    #[command(flatten)]
    pub model: ModelArgs,
}

/// Timing and protocol parameters shared by both subcommands.
#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Link rate in bit/s (evaluation setting: 1 Gbit/s links)
    #[arg(long, default_value_t = 1_000_000_000, value_parser = clap::value_parser!(u64).range(1..))]
    pub link_rate: u64,

    /// Per-link propagation delay in ns (modelling assumption: negligible)
    #[arg(long, default_value_t = 0)]
    pub propagation_ns: u64,

    /// Switch hardware forwarding delay in µs (evaluation setting)
    #[arg(long, default_value_t = 8)]
    pub forwarding_delay_us: u64,

    /// Controller processing time per packet-in in µs (evaluation setting)
    #[arg(long, default_value_t = 100)]
    pub controller_processing_us: u64,

    /// Switch processing time per OpenFlow message in µs (assumed equal to the controller's)
    #[arg(long, default_value_t = 100)]
    pub switch_processing_us: u64,

    /// Size of every controller message in bytes (modelling assumption)
    #[arg(long, default_value_t = 128, value_parser = clap::value_parser!(u64).range(1..))]
    pub control_message_bytes: u64,

    /// TTL of offers in seconds
    #[arg(long, default_value_t = 3)]
    pub offer_ttl: u32,

    /// TTL of finds in seconds
    #[arg(long, default_value_t = 3)]
    pub find_ttl: u32,

    /// TTL of subscriptions in seconds
    #[arg(long, default_value_t = 3)]
    pub subscribe_ttl: u32,

    /// Simulated-time budget per run in ms
    #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u64).range(1..))]
    pub limit_ms: u64,
}

impl ModelArgs {
    pub fn config(&self, mode: Mode, switches: usize, producers: usize, consumers: usize) -> ScenarioConfig {
        ScenarioConfig {
            timing: Timing {
                link_rate_bps: self.link_rate,
                propagation: SimTime::from_nanos(self.propagation_ns),
                forwarding_delay: SimTime::from_micros(self.forwarding_delay_us),
                controller_processing: SimTime::from_micros(self.controller_processing_us),
                switch_processing: SimTime::from_micros(self.switch_processing_us),
                control_message_bytes: self.control_message_bytes,
            },
            offer_ttl: self.offer_ttl,
            find_ttl: self.find_ttl,
            subscribe_ttl: self.subscribe_ttl,
            limit: SimTime::from_millis(self.limit_ms),
            ..ScenarioConfig::new(mode, switches, producers, consumers)
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("no results to write")]
    EmptyResults,
    #[error("cannot start worker pool: {0}")]
    Pool(String),
    #[error("{failed} of {total} runs failed")]
    SweepFailures { failed: usize, total: usize },
}

impl CliError {
    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        2
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `sweep.csv` and one file per series into `dir`. Returns the paths
/// written, master file first.
pub fn emit_csv(results: &[SweepResult], dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    if results.is_empty() {
        return Err(CliError::EmptyResults);
    }
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut written = Vec::new();
    let master = dir.join("sweep.csv");
    fs::write(&master, sweep_csv(results)).map_err(io_err(&master))?;
    written.push(master);
    for (name, body) in series_csv(results) {
        let path = dir.join(name);
        fs::write(&path, body).map_err(io_err(&path))?;
        written.push(path);
    }
    Ok(written)
}

fn write_trace(path: &Path, lines: &[String]) -> Result<(), CliError> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = std::io::BufWriter::new(file);
    for line in lines {
        writeln!(w, "{line}").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn run(args: &RunArgs, out: &mut impl std::io::Write) -> Result<SweepResult, CliError> {
    let config = args.model.config(
        args.mode,
        args.switches as usize,
        args.producers as usize,
        args.consumers as usize,
    );
    let mut sim = build_simulation(&config)?;
    if args.trace.is_some() {
        sim.network.enable_trace();
    }
    let outcome = sim.run();
    if let Some(path) = &args.trace {
        write_trace(path, &sim.network.take_trace())?;
    }
    let metrics = outcome?;
    let c = metrics.counters;
    let _ = writeln!(
        out,
        "mode={} switches={} producers={} consumers={} setup_time_s={} acks={} packet_ins={} flow_mods={} packet_outs={} frames={}",
        config.mode,
        config.switches,
        config.producers,
        config.consumers,
        metrics.setup_time.to_seconds_string(),
        metrics.positive_acks,
        c.packet_ins,
        c.flow_mods,
        c.packet_outs,
        c.frames_sent,
    );
    let result = SweepResult {
        mode: config.mode,
        switches: config.switches,
        producers: config.producers,
        consumers: config.consumers,
        metrics,
    };
    if let Some(dir) = &args.out {
        emit_csv(std::slice::from_ref(&result), dir)?;
    }
    Ok(result)
}

pub fn sweep(args: &SweepArgs, out: &mut impl std::io::Write) -> Result<Vec<SweepResult>, CliError> {
    let grid = SweepGrid {
        modes: args.modes.clone(),
        switches: args.switches.iter().map(|&s| s as usize).collect(),
        producers: args.producers.iter().map(|&p| p as usize).collect(),
        consumers: args.consumers.iter().map(|&c| c as usize).collect(),
    };
    let base = args.model.config(Mode::Ethernet, 1, 1, 1);
    let outcome = run_sweep(&grid, &base, args.jobs).map_err(|e| CliError::Pool(e.to_string()))?;
    let total = outcome.results.len() + outcome.failures.len();
    for (c, e) in &outcome.failures {
        log::error!("{} S={} P={} C={}: {e}", c.mode, c.switches, c.producers, c.consumers);
    }
    let written = emit_csv(&outcome.results, &args.out)?;
    let _ = writeln!(
        out,
        "{} runs, {} files written to {}",
        outcome.results.len(),
        written.len(),
        args.out.display()
    );
    if !outcome.failures.is_empty() {
        return Err(CliError::SweepFailures {
            failed: outcome.failures.len(),
            total,
        });
    }
    Ok(outcome.results)
}

/// Parses `argv` and runs the command. Returns the process exit status.
pub fn main_with<I, T>(argv: I, out: &mut impl std::io::Write, err: &mut impl std::io::Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(err, "{text}");
                1
            } else {
                let _ = write!(out, "{text}");
                0
            };
        }
    };
    let outcome = match &cli.command {
        Command::Run(args) => run(args, out).map(|_| ()),
        Command::Sweep(args) => sweep(args, out).map(|_| ()),
    };
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}
