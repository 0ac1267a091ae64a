use std::sync::Arc;

use super::flight::FlightLog;
use crate::dynamics::heightmap::HeightMap;
use crate::dynamics::params::QuadParams;
use crate::dynamics::quad::{QuadModel, QuadState, RotorThrusts, STATE_DIM};
use crate::dynamics::residual::{residual_input, residual_output_extract, ResidualVariant};
use crate::error::{Error, Result};
use crate::integrator::{rk4_step_model, EvalCounts};
use crate::neural::ResidualDataset;
use crate::Vector;

/// Residual labels from consecutive logged transitions: the one-step
/// prediction error of the nominal model divided by the step, restricted to
/// the variant's output rows.
pub fn collect_and_label(
    logs: &[FlightLog],
    params: &QuadParams,
    variant: ResidualVariant,
    height_map: Option<Arc<HeightMap>>,
) -> Result<ResidualDataset> {
    if variant.state_dim() != STATE_DIM {
        return Err(Error::Config(format!("variant {variant} does not describe the quadrotor")));
    }
    let model = QuadModel::new(params.clone())?;
    let mut inputs = Vec::new();
    let mut labels = Vec::new();
    let mut counts = EvalCounts::default();
    for log in logs {
        if log.len() < 2 {
            continue;
        }
        let dt = log.control_period;
        for k in 0..log.len() - 1 {
            let step = log.times[k + 1] - log.times[k];
            if (step - dt).abs() > 1e-9 * dt.max(1.0) {
                return Err(Error::InputDomain(format!(
                    "non-uniform timestamps in {} log at sample {k}: step {step}, expected {dt}",
                    log.trajectory
                )));
            }
            let (x, u, next) = (&log.states[k], &log.commands[k], &log.states[k + 1]);
            let predicted = rk4_step_model(&model, x, u, dt, &mut counts)?;
            let label = residual_output_extract(&((next - predicted) / dt), variant);
            let state = QuadState::from_vector(x)?;
            let thrusts = RotorThrusts([u[0], u[1], u[2], u[3]]);
            let z = residual_input(&state, &thrusts, variant, height_map.clone())?;
            inputs.extend(z.iter());
            labels.extend(label.iter());
        }
    }
    ResidualDataset::new(variant, variant.feature_dim(), variant.output_dim(), inputs, labels)
}

/// Evenly spaced subset of `n` rows, keeping order.
pub fn subsample(ds: &ResidualDataset, n: usize) -> Result<ResidualDataset> {
    if n >= ds.len() {
        return Ok(ds.clone());
    }
    let (fd, ld) = (ds.feature_dim, ds.label_dim);
    let mut inputs = Vec::with_capacity(n * fd);
    let mut labels = Vec::with_capacity(n * ld);
    for i in 0..n {
        let row = i * ds.len() / n;
        inputs.extend_from_slice(ds.input(row));
        labels.extend_from_slice(ds.label(row));
    }
    ResidualDataset::new(ds.variant, fd, ld, inputs, labels)
}

/// Labels as owned vectors.
pub fn labels_as_vectors(ds: &ResidualDataset) -> Vec<Vector> {
    (0..ds.len()).map(|i| Vector::from_column_slice(ds.label(i))).collect()
}
