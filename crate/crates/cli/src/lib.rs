//! `nmpc`: command-line driver for the neural-mpc toolkit.
//!
//! Every run writes `manifest.json` next to its outputs. The manifest holds
//! the fully resolved configuration, so `nmpc --replay <manifest>` repeats a
//! run without any of the original flags or config files.

pub mod bench;
pub mod collect;
pub mod info;
pub mod manifest;
pub mod settings;
pub mod track;
pub mod train;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use manifest::RunManifest;

#[derive(Debug, Parser)]
#[command(
    name = "nmpc",
    version,
    about = "Real-time iteration MPC with learned residual dynamics"
)]
pub struct Cli {
    /// Repeat the run recorded in a manifest.
    #[arg(long, value_name = "MANIFEST")]
    pub replay: Option<PathBuf>,

    /// Output directory for `--replay`; defaults to the recorded one.
    #[arg(long, requires = "replay")]
    pub out: Option<PathBuf>,

    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Runtime sweep over network sizes on the double integrator.
    Bench(bench::BenchArgs),
    /// Fly the nominal controller and label residual training data.
    Collect(collect::CollectArgs),
    /// Train a residual network on a collected dataset.
    Train(train::TrainArgs),
    /// Fly one evaluation trajectory and report the tracking error.
    Track(track::TrackArgs),
    /// Print version, defaults and optionally a model description.
    Info(info::InfoArgs),
}

/// Failure classes mapped to process exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags, configs or input files: exit code 2.
    Usage(anyhow::Error),
    /// Anything that went wrong while running: exit code 1.
    Runtime(anyhow::Error),
}

impl CliError {
    pub fn usage(msg: impl std::fmt::Display) -> Self {
        CliError::Usage(anyhow::anyhow!("{msg}"))
    }

    pub fn runtime(msg: impl std::fmt::Display) -> Self {
        CliError::Runtime(anyhow::anyhow!("{msg}"))
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(e) | CliError::Runtime(e) => write!(f, "{e:#}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<neural_mpc::Error> for CliError {
    fn from(e: neural_mpc::Error) -> Self {
        use neural_mpc::Error as E;
        match e {
            E::Config(_) | E::Format(_) => CliError::Usage(e.into()),
            _ => CliError::Runtime(e.into()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.into())
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// What a command produced.
#[derive(Debug, Default)]
pub struct Outcome {
    /// Files read, digested into the manifest.
    pub inputs: Vec<PathBuf>,
    /// Files written, relative to the output directory.
    pub outputs: Vec<PathBuf>,
}

pub fn run(cli: Cli) -> CliResult<()> {
    if let Some(path) = &cli.replay {
        if cli.command.is_some() {
            return Err(CliError::usage("--replay cannot be combined with a subcommand"));
        }
        return replay(path, cli.out.as_deref());
    }
    let Some(command) = cli.command else {
        return Err(CliError::usage("a subcommand or --replay is required (see --help)"));
    };
    match command {
        Command::Bench(a) => finish("bench", &a.out, &a.resolve()?, bench::execute),
        Command::Collect(a) => finish("collect", &a.out, &a.resolve()?, collect::execute),
        Command::Train(a) => finish("train", &a.out, &a.resolve()?, train::execute),
        Command::Track(a) => finish("track", &a.out, &a.resolve()?, track::execute),
        Command::Info(a) => info::execute(&a),
    }
}

/// Seed recorded in the manifest.
pub trait Seeded {
    fn seed(&self) -> u64;
}

fn finish<R>(command: &str, out: &Path, resolved: &R, execute: fn(&R, &Path) -> CliResult<Outcome>) -> CliResult<()>
where
    R: serde::Serialize + Seeded,
{
    std::fs::create_dir_all(out)
        .map_err(|e| CliError::usage(format!("cannot create output directory {}: {e}", out.display())))?;
    let outcome = execute(resolved, out)?;
    let config = serde_json::to_value(resolved).map_err(CliError::runtime)?;
    let manifest = RunManifest::new(command, resolved.seed(), config, out, &outcome)?;
    manifest.write(out)?;
    log::info!("wrote {}", out.join(manifest::MANIFEST_NAME).display());
    Ok(())
}

fn replay(path: &Path, out: Option<&Path>) -> CliResult<()> {
    let m = RunManifest::read(path)?;
    m.verify_inputs()?;
    let out = out.map(Path::to_path_buf).unwrap_or_else(|| m.out.clone());
    log::info!("replaying {} run into {}", m.command, out.display());
    match m.command.as_str() {
        "bench" => finish("bench", &out, &m.config_as::<bench::BenchRun>()?, bench::execute),
        "collect" => finish("collect", &out, &m.config_as::<collect::CollectRun>()?, collect::execute),
        "train" => finish("train", &out, &m.config_as::<train::TrainRun>()?, train::execute),
        "track" => finish("track", &out, &m.config_as::<track::TrackRun>()?, track::execute),
        other => Err(CliError::usage(format!("manifest records unknown command {other:?}"))),
    }
}
