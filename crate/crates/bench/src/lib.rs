//! Fixtures shared by the criterion benchmarks.

use std::sync::Arc;

use neural_mpc::sim::{Trajectory, TrajectoryConfig, TrajectoryKind};
use neural_mpc::sweep::{sine_reference, zero_residual};
use neural_mpc::{DoubleIntegrator, Mode, OcpConfig, QuadModel, QuadParams, Result, RtiController, Vector};

/// Double-integrator controller with a `depth x width` zero-output network,
/// or none for `width == 0`.
pub fn double_integrator(depth: usize, width: usize, mode: Mode) -> Result<RtiController> {
    let ocp = OcpConfig { mode, ..OcpConfig::double_integrator_default() };
    let residual = if width == 0 { None } else { Some(zero_residual(depth, width, 1)?) };
    let x0 = Vector::from_column_slice(&[0.5, 0.0]);
    let window = sine_reference(0.0, ocp.horizon, ocp.dt);
    RtiController::new(ocp, Arc::new(DoubleIntegrator), residual, &x0, &window)
}

/// Nominal quadrotor controller at the start of the 7 m/s circle.
pub fn quadrotor() -> Result<(RtiController, Trajectory)> {
    let p = QuadParams::default();
    let traj = Trajectory::new(TrajectoryKind::Circle, 7.0, TrajectoryConfig::default(), &p)?;
    let ocp = OcpConfig::quad_default();
    let window = traj.window(0.0, ocp.horizon, ocp.dt);
    let ctrl = RtiController::new(ocp, Arc::new(QuadModel::new(p)?), None, &traj.initial_state(), &window)?;
    Ok((ctrl, traj))
}
