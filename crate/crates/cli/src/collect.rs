use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};

use neural_mpc::config;
use neural_mpc::sim::{collect_and_label, subsample, FlightLog, TrajectoryKind};
use neural_mpc::{ResidualDataset, ResidualVariant};

use crate::settings::{fly, load_or, PlantArgs, PlantSettings};
use crate::{CliError, CliResult, Outcome, Seeded};

/// Flights stop once this many rounds over all trajectories and speeds fail
/// to reach the target.
const MAX_ROUNDS: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CollectConfig {
    /// Dataset size after subsampling.
    pub target_points: usize,
    /// Noise seed of the first flight; later flights count up from it.
    pub seed: u64,
    pub speeds: Vec<f64>,
    pub trajectories: Vec<TrajectoryKind>,
    /// Laps per flight after the ramp.
    pub laps: f64,
    pub variant: ResidualVariant,
}

#[derive(Debug, Clone, Args)]
pub struct CollectArgs {
    /// Collection settings [default: configs/collect.toml].
    #[arg(long, value_name = "TOML")]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub target_points: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated speeds, m/s.
    #[arg(long, value_delimiter = ',')]
    pub speeds: Option<Vec<f64>>,
    #[arg(long, default_value = "out/collect")]
    pub out: PathBuf,
    #[command(flatten)]
    pub plant: PlantArgs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CollectRun {
    pub collect: CollectConfig,
    pub plant: PlantSettings,
}

impl Seeded for CollectRun {
    fn seed(&self) -> u64 {
        self.collect.seed
    }
}

impl CollectArgs {
    pub fn resolve(&self) -> CliResult<CollectRun> {
        let mut collect: CollectConfig = load_or(self.config.as_deref(), config::COLLECT, "collect.toml")?;
        if let Some(n) = self.target_points {
            collect.target_points = n;
        }
        if let Some(s) = self.seed {
            collect.seed = s;
        }
        if let Some(s) = &self.speeds {
            collect.speeds = s.clone();
        }
        let mut plant = self.plant.resolve()?;
        plant.trajectory.laps = collect.laps;
        plant.sim.seed = collect.seed;
        CollectRun { collect, plant }.validated()
    }
}

impl CollectRun {
    fn validated(self) -> CliResult<Self> {
        let c = &self.collect;
        if c.target_points == 0 || c.speeds.is_empty() || c.trajectories.is_empty() {
            return Err(CliError::usage("collect needs target_points > 0, speeds and trajectories"));
        }
        if c.speeds.iter().any(|s| !(*s > 0.0)) {
            return Err(CliError::usage("collect speeds must be positive"));
        }
        if c.variant != self.plant.ocp.residual_variant {
            return Err(CliError::usage(format!(
                "collect variant {} does not match the controller variant {}",
                c.variant, self.plant.ocp.residual_variant
            )));
        }
        Ok(self)
    }
}

/// Fly rounds over all trajectories and speeds, one noise seed per flight,
/// until the labelled data reaches the target; then subsample to it. Flights
/// that end early are logged but contribute no data.
pub fn collect_dataset(run: &CollectRun) -> CliResult<(ResidualDataset, Vec<FlightLog>)> {
    let c = &run.collect;
    let mut data: Option<ResidualDataset> = None;
    let mut logs = Vec::new();
    let mut seed = c.seed;
    for round in 0..MAX_ROUNDS {
        for &kind in &c.trajectories {
            for &speed in &c.speeds {
                let log = fly(&run.plant, kind, speed, seed, None)?;
                seed += 1;
                match &log.failure {
                    Some(f) => log::warn!("{kind} at {speed} m/s (seed {}): {f}; flight skipped", log.seed),
                    None => {
                        let ds = collect_and_label(std::slice::from_ref(&log), &run.plant.quad, c.variant, None)?;
                        match &mut data {
                            Some(d) => d.append(&ds)?,
                            None => data = Some(ds),
                        }
                    }
                }
                logs.push(log);
            }
        }
        let have = data.as_ref().map_or(0, ResidualDataset::len);
        log::info!("round {round}: {have} labelled points");
        if have >= c.target_points {
            let ds = subsample(data.as_ref().expect("non-empty"), c.target_points)?;
            return Ok((ds, logs));
        }
    }
    Err(CliError::runtime(format!(
        "only {} points after {MAX_ROUNDS} rounds of flights",
        data.map_or(0, |d| d.len())
    )))
}

pub fn execute(run: &CollectRun, out: &Path) -> CliResult<Outcome> {
    let (ds, logs) = collect_dataset(run)?;
    let flights = out.join("flights");
    std::fs::create_dir_all(&flights)?;
    let mut outputs = Vec::new();
    for log in &logs {
        let name = PathBuf::from("flights").join(format!("{}_{}_s{}.csv", log.trajectory, log.speed, log.seed));
        log.write_csv(&out.join(&name))?;
        outputs.push(name);
    }
    ds.write(&out.join("dataset.bin"))?;
    outputs.push("dataset.bin".into());
    outputs.push("dataset.bin.json".into());
    let skipped = logs.iter().filter(|l| l.failure.is_some()).count();
    println!(
        "{} flights ({} skipped), {} labelled points of variant {} in {}",
        logs.len(),
        skipped,
        ds.len(),
        ds.variant,
        out.join("dataset.bin").display()
    );
    Ok(Outcome {
        outputs,
        ..Outcome::default()
    })
}
