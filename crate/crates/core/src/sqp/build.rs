//! QP construction: RK4 sensitivities of the combined model at every node
//! and Gauss-Newton cost blocks.
//!
//! The learned part of the model is only reachable through
//! [`StageResidual`]; this file knows nothing about how it is computed.

use super::config::OcpConfig;
use super::iterate::{Iterate, ReferenceWindow};
use super::qp_data::QpData;
use crate::dynamics::Dynamics;
use crate::error::Result;
use crate::integrator::{rk4_sensitivities, EvalCounts};
use crate::{Matrix, Vector};

/// Additive correction to the nominal dynamics at shooting node `k`.
pub trait StageResidual {
    /// `f += f_res(x, u)`.
    fn add_value(&self, k: usize, x: &Vector, u: &Vector, f: &mut Vector);

    /// `fx += d f_res / dx`, `fu += d f_res / du`.
    fn add_jacobians(&self, k: usize, x: &Vector, u: &Vector, fx: &mut Matrix, fu: &mut Matrix);
}

/// Linearize the OCP at `iterate` and assemble the QP.
pub fn build_qp(
    nominal: &dyn Dynamics,
    residual: &dyn StageResidual,
    iterate: &Iterate,
    reference: &ReferenceWindow,
    config: &OcpConfig,
    counts: &mut EvalCounts,
) -> Result<QpData> {
    let n = config.horizon;
    let (nx, nu) = (nominal.state_dim(), nominal.input_dim());
    config.validate(nx, nu)?;
    iterate.validate(n, nx, nu)?;
    reference.validate(n, nx, nu)?;

    let mut a = Vec::with_capacity(n);
    let mut b = Vec::with_capacity(n);
    let mut phi_bar = Vec::with_capacity(n);
    for k in 0..n {
        let f = |x: &Vector, u: &Vector| {
            let mut f = nominal.eval(x, u);
            residual.add_value(k, x, u, &mut f);
            f
        };
        let df = |x: &Vector, u: &Vector| {
            let (mut fx, mut fu) = nominal.jacobians(x, u);
            residual.add_jacobians(k, x, u, &mut fx, &mut fu);
            (fx, fu)
        };
        let s = rk4_sensitivities(f, df, &iterate.xs[k], &iterate.us[k], config.dt, counts)
            .map_err(|e| e.at_node(k))?;
        let mut next = s.phi_bar;
        nominal.normalize(&mut next);
        phi_bar.push(next);
        a.push(s.a);
        b.push(s.b);
    }

    let qw = Vector::from_column_slice(&config.state_weights);
    let rw = Vector::from_column_slice(&config.input_weights);
    let hx = Matrix::from_diagonal(&(&qw * 2.0));
    let hu = Matrix::from_diagonal(&(&rw * 2.0));
    let q = (0..=n)
        .map(|k| (&iterate.xs[k] - &reference.xs[k]).component_mul(&qw) * 2.0)
        .collect();
    let r = (0..n)
        .map(|k| (&iterate.us[k] - &reference.us[k]).component_mul(&rw) * 2.0)
        .collect();
    let u_min = Vector::from_column_slice(&config.u_min);
    let u_max = Vector::from_column_slice(&config.u_max);
    counts.qp_builds += 1;
    Ok(QpData {
        a,
        b,
        phi_bar,
        x_lin: iterate.xs.clone(),
        u_lin: iterate.us.clone(),
        q,
        r,
        hx: vec![hx; n + 1],
        hu: vec![hu; n],
        lb: iterate.us.iter().map(|u| &u_min - u).collect(),
        ub: iterate.us.iter().map(|u| &u_max - u).collect(),
        general: None,
    })
}
