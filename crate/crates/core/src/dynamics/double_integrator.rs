//! Double integrator on a scalar position, used by the runtime benchmark.

use crate::{Matrix, Vector};

use super::Dynamics;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DoubleIntegratorState {
    pub p: f64,
    pub p_dot: f64,
}

/// `(p_dot, u)`.
pub fn double_integrator_dynamics(x: DoubleIntegratorState, u: f64) -> [f64; 2] {
    [x.p_dot, u]
}

#[derive(Debug, Clone, Copy, Default)]
pub struct DoubleIntegrator;

impl Dynamics for DoubleIntegrator {
    fn state_dim(&self) -> usize {
        2
    }

    fn input_dim(&self) -> usize {
        1
    }

    fn eval(&self, x: &Vector, u: &Vector) -> Vector {
        let d = double_integrator_dynamics(
            DoubleIntegratorState {
                p: x[0],
                p_dot: x[1],
            },
            u[0],
        );
        Vector::from_column_slice(&d)
    }

    fn jacobians(&self, _x: &Vector, _u: &Vector) -> (Matrix, Matrix) {
        (
            Matrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]),
            Matrix::from_row_slice(2, 1, &[0.0, 1.0]),
        )
    }

    fn steady_input(&self) -> Vector {
        Vector::zeros(1)
    }
}
