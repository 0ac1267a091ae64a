//! Elimination of the state deviations through the continuity equations.
//!
//! With `dx_k = Phi_k dx_0 + Gamma_k dU + c_k` the QP becomes
//! `min 1/2 dU' H dU + g' dU + const` subject to box bounds on `dU`.
//! Everything that does not depend on `dx_0` is computed in [`Condensing::new`]
//! (preparation); [`Condensing::fix_initial_state`] is the cheap feedback part.

use crate::error::{Error, Result};
use crate::sqp::QpData;
use crate::{Matrix, Vector};

/// Dense box QP in the stacked input deviations `dU = (du_0, .., du_{N-1})`.
#[derive(Debug, Clone, PartialEq)]
pub struct CondensedQp {
    pub h: Matrix,
    pub g: Vector,
    pub lb: Vector,
    pub ub: Vector,
    /// Objective value at `dU = 0`.
    pub constant: f64,
    pub dx0: Vector,
    /// Recovery maps `dx_k = phi[k] dx0 + gamma[k] dU + c[k]`, `k = 0..N`.
    pub phi: Vec<Matrix>,
    pub gamma: Vec<Matrix>,
    pub c: Vec<Vector>,
}

impl CondensedQp {
    pub fn dim(&self) -> usize {
        self.g.len()
    }

    pub fn objective(&self, du: &Vector) -> f64 {
        self.constant + self.g.dot(du) + 0.5 * du.dot(&(&self.h * du))
    }

    pub fn recover_states(&self, du: &Vector) -> Vec<Vector> {
        (0..self.phi.len())
            .map(|k| &self.phi[k] * &self.dx0 + &self.gamma[k] * du + &self.c[k])
            .collect()
    }

    /// Split a stacked `dU` into per-node blocks.
    pub fn split_inputs(&self, du: &Vector, nu: usize) -> Vec<Vector> {
        du.as_slice().chunks(nu).map(Vector::from_column_slice).collect()
    }
}

/// `dx_0`-independent part of the condensed QP.
#[derive(Debug, Clone)]
pub struct Condensing {
    h: Matrix,
    g0: Vector,
    /// `d g / d dx_0`.
    g_x0: Matrix,
    lb: Vector,
    ub: Vector,
    phi: Vec<Matrix>,
    gamma: Vec<Matrix>,
    c: Vec<Vector>,
    q: Vec<Vector>,
    hx: Vec<Matrix>,
}

impl Condensing {
    pub fn new(qp: &QpData) -> Result<Self> {
        qp.validate()?;
        if qp.general.is_some() {
            return Err(Error::Unsupported(
                "general constraint rows are not supported by the box-QP solver; only input bounds are".into(),
            ));
        }
        let n = qp.horizon();
        let (nx, nu) = (qp.nx(), qp.nu());
        let nv = n * nu;

        let mut phi = Vec::with_capacity(n + 1);
        let mut gamma = Vec::with_capacity(n + 1);
        let mut c = Vec::with_capacity(n + 1);
        phi.push(Matrix::identity(nx, nx));
        gamma.push(Matrix::zeros(nx, nv));
        c.push(Vector::zeros(nx));
        for k in 0..n {
            let a = &qp.a[k];
            let mut g_next = Matrix::zeros(nx, nv);
            if k > 0 {
                // Only the first k block columns of Gamma_k are nonzero.
                let cols = k * nu;
                let prod = a * gamma[k].columns(0, cols);
                g_next.columns_mut(0, cols).copy_from(&prod);
            }
            g_next.columns_mut(k * nu, nu).copy_from(&qp.b[k]);
            phi.push(a * &phi[k]);
            c.push(a * &c[k] + qp.defect(k));
            gamma.push(g_next);
        }

        let mut h = Matrix::zeros(nv, nv);
        let mut g0 = Vector::zeros(nv);
        let mut g_x0 = Matrix::zeros(nv, nx);
        for k in 1..=n {
            let cols = k * nu;
            let gk = gamma[k].columns(0, cols);
            let hg = &qp.hx[k] * gk;
            let block = gk.transpose() * &hg;
            let mut hv = h.view_mut((0, 0), (cols, cols));
            hv += block;
            let rhs = &qp.q[k] + &qp.hx[k] * &c[k];
            let mut gv = g0.rows_mut(0, cols);
            gv += gk.transpose() * rhs;
            let mut gx = g_x0.view_mut((0, 0), (cols, nx));
            gx += hg.transpose() * &phi[k];
        }
        for k in 0..n {
            let mut hv = h.view_mut((k * nu, k * nu), (nu, nu));
            hv += &qp.hu[k];
            let mut gv = g0.rows_mut(k * nu, nu);
            gv += &qp.r[k];
        }
        // Exact symmetry regardless of summation order.
        let h = (&h + h.transpose()) * 0.5;

        let stack = |v: &[Vector]| Vector::from_iterator(nv, v.iter().flat_map(|b| b.iter().copied()));
        Ok(Self {
            h,
            g0,
            g_x0,
            lb: stack(&qp.lb),
            ub: stack(&qp.ub),
            phi,
            gamma,
            c,
            q: qp.q.clone(),
            hx: qp.hx.clone(),
        })
    }

    pub fn hessian(&self) -> &Matrix {
        &self.h
    }

    /// Substitute the measured initial deviation.
    pub fn fix_initial_state(&self, dx0: &Vector) -> Result<CondensedQp> {
        let nx = self.phi[0].nrows();
        if dx0.len() != nx {
            return Err(Error::shape("initial state deviation", nx, dx0.len()));
        }
        let mut g = self.g0.clone();
        g.gemv(1.0, &self.g_x0, dx0, 1.0);
        let mut constant = 0.0;
        for k in 0..self.phi.len() {
            let s = &self.phi[k] * dx0 + &self.c[k];
            constant += self.q[k].dot(&s) + 0.5 * s.dot(&(&self.hx[k] * &s));
        }
        Ok(CondensedQp {
            h: self.h.clone(),
            g,
            lb: self.lb.clone(),
            ub: self.ub.clone(),
            constant,
            dx0: dx0.clone(),
            phi: self.phi.clone(),
            gamma: self.gamma.clone(),
            c: self.c.clone(),
        })
    }
}

/// Condense `qp` for the initial deviation `dx0` in one go.
pub fn condense(qp: &QpData, dx0: &Vector) -> Result<CondensedQp> {
    Condensing::new(qp)?.fix_initial_state(dx0)
}
