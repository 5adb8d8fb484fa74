//! Experiment runner behind the `chirpscatter` binary.
//!
//! Each experiment reads a flat config file (see [`config`]), validates
//! every parameter before doing any work, and writes its CSV or IQ artifacts
//! atomically into the output directory. CSV artifacts open with a
//! `# config` block holding the fully resolved parameters.

pub mod config;
pub mod experiments;

use std::path::{Path, PathBuf};

use chirpscatter::frame::FrameError;
use chirpscatter::mac::MacError;
use chirpscatter::synth::SynthError;
use chirpscatter::{ParamError, SignalError};
use clap::{Args, Parser, Subcommand};
use thiserror::Error;

pub use config::Config;
pub use experiments::{loopback, run_experiment, Experiment, LoopbackArgs, LoopbackOutcome};

pub const SEED_ENV: &str = "CHIRPSCATTER_SEED";
pub const DEFAULT_SEED: u64 = 1;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad configuration; nothing was run.
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn validation(msg: impl Into<String>) -> Self {
        CliError::Validation(msg.into())
    }

    pub fn runtime(msg: impl Into<String>) -> Self {
        CliError::Runtime(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

impl From<ParamError> for CliError {
    fn from(e: ParamError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        CliError::Validation(format!("synth: {e}"))
    }
}

impl From<MacError> for CliError {
    fn from(e: MacError) -> Self {
        match e {
            MacError::Param(p) => p.into(),
            other => CliError::Validation(format!("device: {other}")),
        }
    }
}

impl From<FrameError> for CliError {
    fn from(e: FrameError) -> Self {
        match e {
            FrameError::Param(p) => p.into(),
            other => CliError::Runtime(format!("decode failed: {other}")),
        }
    }
}

impl From<SignalError> for CliError {
    fn from(e: SignalError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "chirpscatter", version, about = "Chirp backscatter experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Encode a frame to IQ samples.
    Modulate(RunArgs),
    /// Decode a frame from an IQ file.
    Demodulate(RunArgs),
    /// Harmonic spectra of the square and multi-level synthesizers.
    Spectrum(RunArgs),
    /// Packet error rate against received power.
    #[command(name = "per-sweep")]
    PerSweep(RunArgs),
    /// RSSI with the tag between source and receiver.
    #[command(name = "range-scenario1")]
    RangeScenario1(RunArgs),
    /// RSSI with the receiver moving away from the tag.
    #[command(name = "range-scenario2")]
    RangeScenario2(RunArgs),
    /// TDMA rounds and their event transcript.
    #[command(name = "mac-sim")]
    MacSim(RunArgs),
    /// Solo against concurrent PER for devices on separate channels.
    Concurrent(RunArgs),
    /// Build, synthesize, pass through the channel and decode one payload.
    Loopback(LoopbackArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Master seed; beats the environment and the config file.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory; beats `output.dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// `--seed`, then the environment, then `run.seed`, then the default.
pub fn resolve_seed(flag: Option<u64>, env: Option<&str>, config: &Config) -> Result<u64, CliError> {
    let from_file: Option<u64> = config.get_opt("run.seed")?;
    let seed = match (flag, env) {
        (Some(s), _) => s,
        (None, Some(e)) => e
            .trim()
            .parse()
            .map_err(|_| CliError::validation(format!("{SEED_ENV}: cannot parse {e:?}")))?,
        (None, None) => from_file.unwrap_or(DEFAULT_SEED),
    };
    config.note("run.seed", seed);
    Ok(seed)
}

fn env_seed() -> Option<String> {
    std::env::var(SEED_ENV).ok().filter(|s| !s.trim().is_empty())
}

fn run_from_file(kind: Experiment, args: &RunArgs) -> Result<Vec<PathBuf>, CliError> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| CliError::validation(format!("config: {}: {e}", args.config.display())))?;
    let base = args.config.parent().unwrap_or(Path::new("."));
    run_experiment(kind, &text, base, args.seed, env_seed().as_deref(), args.out.as_deref())
}

/// Parses `args` and runs the command, printing results and diagnostics.
/// Returns the process exit code.
pub fn main_with_args<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
        }
    };
    let result = match cli.command {
        Command::Loopback(a) => {
            let seed_env = env_seed();
            loopback(&a, seed_env.as_deref()).map(|out| {
                println!("payload={}", experiments::to_hex(&out.payload));
                println!("crc_ok={}", out.crc_ok);
            })
        }
        Command::Modulate(a) => report(run_from_file(Experiment::Modulate, &a)),
        Command::Demodulate(a) => report(run_from_file(Experiment::Demodulate, &a)),
        Command::Spectrum(a) => report(run_from_file(Experiment::Spectrum, &a)),
        Command::PerSweep(a) => report(run_from_file(Experiment::PerSweep, &a)),
        Command::RangeScenario1(a) => report(run_from_file(Experiment::RangeScenario1, &a)),
        Command::RangeScenario2(a) => report(run_from_file(Experiment::RangeScenario2, &a)),
        Command::MacSim(a) => report(run_from_file(Experiment::MacSim, &a)),
        Command::Concurrent(a) => report(run_from_file(Experiment::Concurrent, &a)),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn report(r: Result<Vec<PathBuf>, CliError>) -> Result<(), CliError> {
    for p in r? {
        println!("wrote {}", p.display());
    }
    Ok(())
}
