//! Explicit RK4 discretization and its first-order sensitivities.

use std::ops::{AddAssign, Sub};

use serde::{Deserialize, Serialize};

use crate::dynamics::Dynamics;
use crate::error::{Error, Result};
use crate::{Matrix, Vector};

pub use crate::dynamics::quad::nominal_jacobians;

/// Evaluation tally. Dynamics counters are charged by the integrator; the
/// network and QP counters by whoever owns those calls.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalCounts {
    pub dyn_value: u64,
    pub dyn_jacobian: u64,
    /// Single-point network value evaluations.
    pub net_value: u64,
    /// Single-point network Jacobian evaluations.
    pub net_jacobian: u64,
    /// Batched network calls and the number of points they covered.
    pub net_batches: u64,
    pub net_batch_points: u64,
    pub qp_builds: u64,
    pub qp_solves: u64,
}

impl AddAssign for EvalCounts {
    fn add_assign(&mut self, o: Self) {
        self.dyn_value += o.dyn_value;
        self.dyn_jacobian += o.dyn_jacobian;
        self.net_value += o.net_value;
        self.net_jacobian += o.net_jacobian;
        self.net_batches += o.net_batches;
        self.net_batch_points += o.net_batch_points;
        self.qp_builds += o.qp_builds;
        self.qp_solves += o.qp_solves;
    }
}

impl Sub for EvalCounts {
    type Output = EvalCounts;

    fn sub(self, o: Self) -> Self {
        EvalCounts {
            dyn_value: self.dyn_value - o.dyn_value,
            dyn_jacobian: self.dyn_jacobian - o.dyn_jacobian,
            net_value: self.net_value - o.net_value,
            net_jacobian: self.net_jacobian - o.net_jacobian,
            net_batches: self.net_batches - o.net_batches,
            net_batch_points: self.net_batch_points - o.net_batch_points,
            qp_builds: self.qp_builds - o.qp_builds,
            qp_solves: self.qp_solves - o.qp_solves,
        }
    }
}

/// `phi_bar = phi(x, u)`, `a = d phi / dx`, `b = d phi / du`.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityResult {
    pub phi_bar: Vector,
    pub a: Matrix,
    pub b: Matrix,
}

fn finite(v: &Vector, stage: usize) -> Result<()> {
    if v.iter().all(|e| e.is_finite()) {
        Ok(())
    } else {
        Err(Error::Propagation { node: None, stage })
    }
}

fn check_dt(dt: f64) -> Result<()> {
    if dt > 0.0 && dt.is_finite() {
        Ok(())
    } else {
        Err(Error::InputDomain(format!("step size {dt} must be positive")))
    }
}

/// One classical RK4 step; exactly four evaluations of `f`.
pub fn rk4_step<F>(f: F, x: &Vector, u: &Vector, dt: f64, counts: &mut EvalCounts) -> Result<Vector>
where
    F: Fn(&Vector, &Vector) -> Vector,
{
    check_dt(dt)?;
    let h = 0.5 * dt;
    let k1 = f(x, u);
    finite(&k1, 1)?;
    let k2 = f(&(x + h * &k1), u);
    finite(&k2, 2)?;
    let k3 = f(&(x + h * &k2), u);
    finite(&k3, 3)?;
    let k4 = f(&(x + dt * &k3), u);
    finite(&k4, 4)?;
    counts.dyn_value += 4;
    Ok(x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4))
}

/// RK4 step of a [`Dynamics`] model followed by its manifold projection.
pub fn rk4_step_model(
    model: &dyn Dynamics,
    x: &Vector,
    u: &Vector,
    dt: f64,
    counts: &mut EvalCounts,
) -> Result<Vector> {
    let mut next = rk4_step(|x, u| model.eval(x, u), x, u, dt, counts)?;
    model.normalize(&mut next);
    Ok(next)
}

/// RK4 step with exact chain-rule sensitivities through all four stages.
///
/// `df` returns `(df/dx, df/du)`. No manifold projection is applied; callers
/// renormalize `phi_bar` themselves and keep `a`, `b` as returned.
pub fn rk4_sensitivities<F, D>(
    f: F,
    df: D,
    x: &Vector,
    u: &Vector,
    dt: f64,
    counts: &mut EvalCounts,
) -> Result<SensitivityResult>
where
    F: Fn(&Vector, &Vector) -> Vector,
    D: Fn(&Vector, &Vector) -> (Matrix, Matrix),
{
    check_dt(dt)?;
    let n = x.len();
    let m = u.len();
    let h = 0.5 * dt;
    let eye = Matrix::identity(n, n);

    let mut acc = Vector::zeros(n);
    let mut acc_x = Matrix::zeros(n, n);
    let mut acc_u = Matrix::zeros(n, m);

    let mut xs = x.clone();
    let mut dxs_dx = eye.clone();
    let mut dxs_du = Matrix::zeros(n, m);
    for (stage, (step, weight)) in [(h, 1.0), (h, 2.0), (dt, 2.0), (0.0, 1.0)].into_iter().enumerate() {
        let k = f(&xs, u);
        finite(&k, stage + 1)?;
        let (fx, fu) = df(&xs, u);
        if !(fx.iter().all(|v| v.is_finite()) && fu.iter().all(|v| v.is_finite())) {
            return Err(Error::Propagation { node: None, stage: stage + 1 });
        }
        let kx = &fx * &dxs_dx;
        let ku = &fx * &dxs_du + fu;
        acc.axpy(weight, &k, 1.0);
        acc_x += weight * &kx;
        acc_u += weight * &ku;
        if stage < 3 {
            xs = x + step * &k;
            dxs_dx = &eye + step * kx;
            dxs_du = step * ku;
        }
    }
    counts.dyn_value += 4;
    counts.dyn_jacobian += 4;
    let c = dt / 6.0;
    Ok(SensitivityResult {
        phi_bar: x + c * acc,
        a: eye + c * acc_x,
        b: c * acc_u,
    })
}
