use serde::{Deserialize, Serialize};

use crate::dynamics::Dynamics;
use crate::error::{Error, Result};
use crate::Vector;

/// Primal iterate `(x_0, u_0, .., x_{N-1}, u_{N-1}, x_N)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Iterate {
    pub xs: Vec<Vector>,
    pub us: Vec<Vector>,
}

/// State references at `t + k dt` for `k = 0..N` and input references for `k < N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceWindow {
    pub xs: Vec<Vector>,
    pub us: Vec<Vector>,
}

fn check_dims(xs: &[Vector], us: &[Vector], n: usize, nx: usize, nu: usize, what: &'static str) -> Result<()> {
    if xs.len() != n + 1 {
        return Err(Error::shape(what, n + 1, xs.len()));
    }
    if us.len() != n {
        return Err(Error::shape(what, n, us.len()));
    }
    if let Some(x) = xs.iter().find(|x| x.len() != nx) {
        return Err(Error::shape(what, nx, x.len()));
    }
    if let Some(u) = us.iter().find(|u| u.len() != nu) {
        return Err(Error::shape(what, nu, u.len()));
    }
    Ok(())
}

impl ReferenceWindow {
    /// The same reference at every node.
    pub fn constant(x: Vector, u: Vector, horizon: usize) -> Self {
        Self {
            xs: vec![x; horizon + 1],
            us: vec![u; horizon],
        }
    }

    pub fn validate(&self, n: usize, nx: usize, nu: usize) -> Result<()> {
        check_dims(&self.xs, &self.us, n, nx, nu, "reference window")
    }
}

impl Iterate {
    pub fn horizon(&self) -> usize {
        self.us.len()
    }

    pub fn validate(&self, n: usize, nx: usize, nu: usize) -> Result<()> {
        check_dims(&self.xs, &self.us, n, nx, nu, "iterate")?;
        if self.xs.iter().chain(&self.us).any(|v| v.iter().any(|e| !e.is_finite())) {
            return Err(Error::InputDomain("iterate has non-finite entries".into()));
        }
        Ok(())
    }

    /// Advance the warm start by `fraction` of a node by linear interpolation
    /// between neighbours; the last node is held. `fraction = 1` is a plain
    /// shift with the last node duplicated.
    pub fn shift(&mut self, fraction: f64, model: &dyn Dynamics) {
        fn advance(v: &mut [Vector], s: f64) {
            for k in 0..v.len().saturating_sub(1) {
                if s == 1.0 {
                    v[k] = v[k + 1].clone();
                } else {
                    let step = (&v[k + 1] - &v[k]) * s;
                    v[k] += step;
                }
            }
        }
        advance(&mut self.xs, fraction);
        advance(&mut self.us, fraction);
        for x in &mut self.xs {
            model.normalize(x);
        }
    }
}

/// States from the reference (the first replaced by `x0`), inputs at the
/// model's steady input.
pub fn init_iterate(model: &dyn Dynamics, x0: &Vector, reference: &ReferenceWindow) -> Result<Iterate> {
    let n = reference.us.len();
    reference.validate(n, model.state_dim(), model.input_dim())?;
    if x0.len() != model.state_dim() {
        return Err(Error::shape("initial state", model.state_dim(), x0.len()));
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::InputDomain("initial state has non-finite entries".into()));
    }
    let mut xs = reference.xs.clone();
    xs[0] = x0.clone();
    Ok(Iterate {
        xs,
        us: vec![model.steady_input(); n],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::double_integrator::DoubleIntegrator;
    use crate::dynamics::params::QuadParams;
    use crate::dynamics::quad::{QuadModel, QuadState};
    use nalgebra::Vector3;

    #[test]
    fn hover_reference_gives_hover_inputs() {
        let p = QuadParams::default();
        let model = QuadModel::new(p.clone()).unwrap();
        let x = QuadState::hover_at(Vector3::new(0.0, 0.0, 2.0)).to_vector();
        let r = ReferenceWindow::constant(x.clone(), model.steady_input(), 10);
        let it = init_iterate(&model, &x, &r).unwrap();
        let hover = p.mass * 9.81 / 4.0;
        assert!(it.us.iter().all(|u| u.iter().all(|t| (t - hover).abs() < 1e-15)));
    }

    #[test]
    fn double_integrator_inputs_zero_and_first_state_exact() {
        let r = ReferenceWindow {
            xs: (0..=10).map(|k| Vector::from_column_slice(&[k as f64, 1.0])).collect(),
            us: vec![Vector::from_element(1, 3.0); 10],
        };
        let x0 = Vector::from_column_slice(&[0.123, -4.0]);
        let it = init_iterate(&DoubleIntegrator, &x0, &r).unwrap();
        assert_eq!(it.xs[0], x0);
        assert_eq!(it.xs[5], r.xs[5]);
        assert!(it.us.iter().all(|u| u[0] == 0.0));
        assert!(init_iterate(&DoubleIntegrator, &Vector::zeros(3), &r).is_err());
    }

    #[test]
    fn shift_duplicates_last() {
        let mut it = Iterate {
            xs: (0..4).map(|k| Vector::from_column_slice(&[k as f64, 0.0])).collect(),
            us: (0..3).map(|k| Vector::from_element(1, k as f64)).collect(),
        };
        it.shift(1.0, &DoubleIntegrator);
        let xs: Vec<f64> = it.xs.iter().map(|x| x[0]).collect();
        assert_eq!(xs, vec![1.0, 2.0, 3.0, 3.0]);
        let us: Vec<f64> = it.us.iter().map(|u| u[0]).collect();
        assert_eq!(us, vec![1.0, 2.0, 2.0]);
        it.shift(0.25, &DoubleIntegrator);
        assert_eq!(it.xs[0][0], 1.25);
        assert_eq!(it.xs[3][0], 3.0);
    }
}
