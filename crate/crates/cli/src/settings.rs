//! Config files shared by the flight commands, and the flight itself.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::Args;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use neural_mpc::config;
use neural_mpc::dynamics::residual::QuadFeatures;
use neural_mpc::sim::{run_closed_loop, FlightLog, SimConfig, Simulator, Trajectory, TrajectoryConfig, TrajectoryKind};
use neural_mpc::{MlpModel, OcpConfig, QuadModel, QuadParams, ResidualModel, RtiController};

use crate::CliResult;

/// Load `path` if given, else parse the embedded default `text`.
pub fn load_or<T: DeserializeOwned>(path: Option<&Path>, text: &str, what: &str) -> CliResult<T> {
    Ok(match path {
        Some(p) => config::load(p)?,
        None => config::parse(text, what)?,
    })
}

#[derive(Debug, Clone, Default, Args)]
pub struct PlantArgs {
    /// Quadrotor parameters [default: configs/quad.toml].
    #[arg(long, value_name = "TOML")]
    pub quad: Option<PathBuf>,
    /// Simulator settings [default: configs/sim.toml].
    #[arg(long, value_name = "TOML")]
    pub sim: Option<PathBuf>,
    /// Trajectory settings [default: configs/trajectory.toml].
    #[arg(long, value_name = "TOML")]
    pub trajectory: Option<PathBuf>,
    /// Controller OCP [default: configs/ocp_quad.toml].
    #[arg(long, value_name = "TOML")]
    pub ocp: Option<PathBuf>,
}

/// Everything a quadrotor flight depends on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantSettings {
    pub quad: QuadParams,
    pub sim: SimConfig,
    pub trajectory: TrajectoryConfig,
    pub ocp: OcpConfig,
}

impl Default for PlantSettings {
    fn default() -> Self {
        Self {
            quad: QuadParams::default(),
            sim: SimConfig::default(),
            trajectory: TrajectoryConfig::default(),
            ocp: OcpConfig::quad_default(),
        }
    }
}

impl PlantArgs {
    pub fn resolve(&self) -> CliResult<PlantSettings> {
        let s = PlantSettings {
            quad: load_or(self.quad.as_deref(), config::QUAD, "quad.toml")?,
            sim: load_or(self.sim.as_deref(), config::SIM, "sim.toml")?,
            trajectory: load_or(self.trajectory.as_deref(), config::TRAJECTORY, "trajectory.toml")?,
            ocp: load_or(self.ocp.as_deref(), config::OCP_QUAD, "ocp_quad.toml")?,
        };
        s.quad.validate()?;
        s.sim.validate(s.ocp.control_period())?;
        Ok(s)
    }
}

/// Residual model around a trained network, checked against the controller.
pub fn residual_for(plant: &PlantSettings, net: MlpModel) -> CliResult<ResidualModel> {
    let variant = net.variant();
    if variant != plant.ocp.residual_variant {
        return Err(crate::CliError::usage(format!(
            "model variant {variant} does not match the controller variant {}",
            plant.ocp.residual_variant
        )));
    }
    let features = QuadFeatures::new(variant, None)?;
    Ok(ResidualModel::new(Arc::new(net), Arc::new(features))?)
}

/// One closed-loop flight; `seed` seeds the simulator noise.
pub fn fly(
    plant: &PlantSettings,
    kind: TrajectoryKind,
    speed: f64,
    seed: u64,
    residual: Option<ResidualModel>,
) -> CliResult<FlightLog> {
    let traj = Trajectory::new(kind, speed, plant.trajectory.clone(), &plant.quad)?;
    let x0 = traj.initial_state();
    let window = traj.window(0.0, plant.ocp.horizon, plant.ocp.dt);
    let model = Arc::new(QuadModel::new(plant.quad.clone())?);
    let mut controller = RtiController::new(plant.ocp.clone(), model, residual, &x0, &window)?;
    let mut sim = Simulator::new(plant.quad.clone(), SimConfig { seed, ..plant.sim.clone() })?;
    Ok(run_closed_loop(&mut controller, &mut sim, &traj)?)
}
