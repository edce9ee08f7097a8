//! Command-line front end. Every command writes its outputs and a
//! [`RunManifest`] into `--out-dir`.

mod commands;
pub mod manifest;
pub mod svg;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::units::parse_duration;
use commands::Failure;

pub use manifest::{FileDigest, Outputs, RunManifest, MANIFEST_FILE};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;

#[derive(Debug, Parser)]
#[command(
    name = "mlburst",
    version,
    about = "Burstiness metrics and traffic models for distributed training",
    args_override_self = true
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Seed for every random draw; overrides a seed in a config file.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Directory that receives all outputs and the run manifest.
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct Binning {
    /// Bin width: a number of seconds or a value with ns/us/ms/s suffix.
    #[arg(long, default_value = "1us", value_parser = parse_bin)]
    pub bin: u64,
}

fn parse_bin(text: &str) -> Result<u64, String> {
    match parse_duration(text) {
        Ok(0) => Err("bin width must be positive".into()),
        Ok(v) => Ok(v),
        Err(e) => Err(e.to_string()),
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Envelope, peak-to-mean, max backlog and interval backlog of a trace.
    Analyze {
        /// Packet trace CSV (`timestamp_ns,bytes`).
        trace: PathBuf,
        #[command(flatten)]
        binning: Binning,
        /// `default`, `full` or a comma list of durations.
        #[arg(long, default_value = "default")]
        lags: String,
        /// Utilizations for the max-backlog sweep.
        #[arg(long, value_delimiter = ',', default_value = "0.01,0.02,0.05,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1")]
        utilizations: Vec<f64>,
        /// Utilization at which the interval backlog is evaluated.
        #[arg(long, default_value_t = 0.05)]
        interval_utilization: f64,
        /// Also write the binned arrivals.
        #[arg(long)]
        binned: bool,
        /// Also render the four metric panels as SVG.
        #[arg(long)]
        svg: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Replace one time window of a trace with a copy of another.
    Splice {
        trace: PathBuf,
        /// Window to overwrite, `start,end` in seconds.
        #[arg(long)]
        remove: String,
        /// Window to copy from, `start,end` in seconds, same length.
        #[arg(long)]
        source: String,
        #[command(flatten)]
        binning: Binning,
        #[command(flatten)]
        common: Common,
    },
    /// Synthesize per-worker traces from a workload spec (JSON).
    Generate {
        /// Workload spec; defaults are used when omitted.
        spec: Option<PathBuf>,
        #[command(flatten)]
        binning: Binning,
        #[command(flatten)]
        common: Common,
    },
    /// Burstiness potential of several flows.
    Potential {
        #[arg(required = true, num_args = 2..)]
        traces: Vec<PathBuf>,
        #[command(flatten)]
        binning: Binning,
        #[arg(long, default_value = "default")]
        lags: String,
        #[command(flatten)]
        common: Common,
    },
    /// Packet-level fan-in simulation (JSON config).
    Simulate {
        /// Simulation config; defaults are used when omitted.
        config: Option<PathBuf>,
        /// Override the number of workers.
        #[arg(long)]
        workers: Option<usize>,
        /// Override the simulated duration.
        #[arg(long, value_parser = parse_bin)]
        duration: Option<u64>,
        /// Run with an idealized fast reaction instead.
        #[arg(long)]
        counterfactual: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Check the ring Allreduce kernel against a direct sum.
    RingVerify {
        #[arg(long, default_value_t = 4)]
        n: usize,
        #[arg(long, default_value_t = 1000)]
        len: usize,
        /// Drop the transfer of `worker,step` to exercise the checker.
        #[arg(long, hide = true)]
        drop_transfer: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Re-run a recorded command and compare output digests.
    Replay {
        manifest: PathBuf,
        #[arg(long, default_value = "replay")]
        out_dir: PathBuf,
    },
}

/// Parses `args` (without the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(std::iter::once(OsString::from("mlburst")).chain(args.iter().cloned())) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let text_args: Vec<String> = args.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    match commands::execute(cli.command, &text_args) {
        Ok(report) => {
            println!("{report}");
            EXIT_OK
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
