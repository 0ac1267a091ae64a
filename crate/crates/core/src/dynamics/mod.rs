//! First-principles models, residual-network wiring and the combined
//! dynamics `f = f_nominal + f_residual`.

pub mod double_integrator;
pub mod heightmap;
pub mod params;
pub mod quad;
pub mod residual;

use crate::{Matrix, Vector};

/// Earth's gravity in the world frame, m/s^2.
pub const GRAVITY: [f64; 3] = [0.0, 0.0, -9.81];

/// Continuous-time model `x_dot = f(x, u)` with analytic Jacobians.
pub trait Dynamics: Send + Sync {
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;

    fn eval(&self, x: &Vector, u: &Vector) -> Vector;

    /// `(df/dx, df/du)`.
    fn jacobians(&self, x: &Vector, u: &Vector) -> (Matrix, Matrix);

    /// Project a state back onto its manifold after a discrete step.
    fn normalize(&self, _x: &mut Vector) {}

    /// Input that keeps the model at rest.
    fn steady_input(&self) -> Vector;
}
