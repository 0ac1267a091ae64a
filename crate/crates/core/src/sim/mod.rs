//! Simplified quadrotor plant, evaluation trajectories, closed-loop flights,
//! residual labeling and tracking metrics.

mod collect;
mod flight;
mod simulator;
mod trajectory;

pub use collect::{collect_and_label, labels_as_vectors, subsample};
pub use flight::{median, run_closed_loop, tracking_error, CycleTelemetry, FlightLog, TrackingError, DIVERGENCE_LIMIT};
pub use simulator::{plant_derivative, NoiseMode, SimConfig, Simulator};
pub use trajectory::{ReferenceSample, Trajectory, TrajectoryConfig, TrajectoryKind};
