use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};

use neural_mpc::config;
use neural_mpc::neural::io::read_model;
use neural_mpc::sim::{tracking_error, TrajectoryKind};

use crate::settings::{fly, load_or, residual_for, PlantArgs, PlantSettings};
use crate::{CliError, CliResult, Outcome, Seeded};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackConfig {
    pub trajectory: TrajectoryKind,
    /// Average speed, m/s.
    pub speed: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct TrackArgs {
    /// Flight settings [default: configs/track.toml].
    #[arg(long, value_name = "TOML")]
    pub config: Option<PathBuf>,
    /// circle or lemniscate.
    #[arg(long, value_parser = parse_kind)]
    pub traj: Option<TrajectoryKind>,
    #[arg(long)]
    pub speed: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Residual model file, or `none` for the nominal controller.
    #[arg(long, default_value = "none")]
    pub model: String,
    #[arg(long, default_value = "out/track")]
    pub out: PathBuf,
    #[command(flatten)]
    pub plant: PlantArgs,
}

pub(crate) fn parse_kind(s: &str) -> Result<TrajectoryKind, String> {
    TrajectoryKind::parse(s).map_err(|e| e.to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackRun {
    pub track: TrackConfig,
    pub model: Option<PathBuf>,
    pub plant: PlantSettings,
}

impl Seeded for TrackRun {
    fn seed(&self) -> u64 {
        self.track.seed
    }
}

impl TrackArgs {
    pub fn resolve(&self) -> CliResult<TrackRun> {
        let mut track: TrackConfig = load_or(self.config.as_deref(), config::TRACK, "track.toml")?;
        if let Some(t) = self.traj {
            track.trajectory = t;
        }
        if let Some(s) = self.speed {
            track.speed = s;
        }
        if let Some(s) = self.seed {
            track.seed = s;
        }
        let mut plant = self.plant.resolve()?;
        plant.sim.seed = track.seed;
        let model = match self.model.as_str() {
            "none" => None,
            p => Some(PathBuf::from(p)),
        };
        Ok(TrackRun { track, model, plant })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackSummary {
    pub trajectory: TrajectoryKind,
    pub speed: f64,
    pub seed: u64,
    pub residual: String,
    pub cycles: usize,
    pub mean_error_m: Option<f64>,
    pub failure: Option<String>,
}

pub fn execute(run: &TrackRun, out: &Path) -> CliResult<Outcome> {
    let mut outcome = Outcome::default();
    let residual = match &run.model {
        None => None,
        Some(p) => {
            let net = read_model(p)
                .map_err(|e| CliError::usage(format!("cannot load model {}: {e}", p.display())))?;
            outcome.inputs.push(p.clone());
            Some(residual_for(&run.plant, net)?)
        }
    };
    let residual_name = residual.as_ref().map_or("none".to_string(), |r| r.network.arch_name());
    let t = &run.track;
    let log = fly(&run.plant, t.trajectory, t.speed, t.seed, residual)?;

    log.write_csv(&out.join("flight.csv"))?;
    log.write_timing_csv(&out.join("flight_timing.csv"))?;
    let mean = tracking_error(&log).ok().map(|e| e.mean);
    let summary = TrackSummary {
        trajectory: t.trajectory,
        speed: t.speed,
        seed: t.seed,
        residual: residual_name,
        cycles: log.len(),
        mean_error_m: mean,
        failure: log.failure.clone(),
    };
    let text = serde_json::to_string_pretty(&summary).map_err(CliError::runtime)?;
    std::fs::write(out.join("summary.json"), text + "\n")?;
    outcome.outputs = ["flight.csv", "flight_timing.csv", "summary.json"].map(PathBuf::from).to_vec();

    let timing = log.median_timing();
    println!(
        "{} at {} m/s, seed {}, residual {}: {} cycles",
        t.trajectory, t.speed, t.seed, summary.residual, summary.cycles
    );
    match mean {
        Some(m) => println!("mean tracking error: {m:.6} m"),
        None => println!("mean tracking error: n/a (no samples after the ramp)"),
    }
    println!(
        "median cycle time: {:.4} ms (dd prep {:.4}, qp prep {:.4}, feedback {:.4})",
        timing.total_ms(),
        timing.prep_dd_ms,
        timing.prep_qp_ms,
        timing.feedback_ms
    );
    if let Some(f) = &log.failure {
        println!("flight ended early: {f}");
    }
    Ok(outcome)
}
