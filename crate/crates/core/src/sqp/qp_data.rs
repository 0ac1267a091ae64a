use crate::error::{Error, Result};
use crate::{Matrix, Vector};

/// Optional general affine rows `lower <= Gx_k dx_k + Gu_k du_k <= upper`.
/// Carried for completeness; the condensing solver rejects them.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralConstraints {
    pub gx: Vec<Matrix>,
    pub gu: Vec<Matrix>,
    pub lower: Vec<Vector>,
    pub upper: Vec<Vector>,
}

/// The QP of one real-time iteration, in deviations `(dx_k, du_k)` from the
/// linearization trajectory:
///
/// ```text
/// min  sum_k q_k' dx_k + 1/2 dx_k' Hx_k dx_k  +  sum_k r_k' du_k + 1/2 du_k' Hu_k du_k
/// s.t. dx_{k+1} = A_k dx_k + B_k du_k + (phi_bar_k - x_{k+1})
///      lb_k <= du_k <= ub_k,   dx_0 = x_measured - x_0
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct QpData {
    pub a: Vec<Matrix>,
    pub b: Vec<Matrix>,
    pub phi_bar: Vec<Vector>,
    /// Linearization states `x_0..x_N`.
    pub x_lin: Vec<Vector>,
    /// Linearization inputs `u_0..u_{N-1}`.
    pub u_lin: Vec<Vector>,
    /// State gradients for `k = 0..N` (the last one is terminal).
    pub q: Vec<Vector>,
    pub r: Vec<Vector>,
    pub hx: Vec<Matrix>,
    pub hu: Vec<Matrix>,
    pub lb: Vec<Vector>,
    pub ub: Vec<Vector>,
    pub general: Option<GeneralConstraints>,
}

impl QpData {
    pub fn horizon(&self) -> usize {
        self.a.len()
    }

    pub fn nx(&self) -> usize {
        self.x_lin[0].len()
    }

    pub fn nu(&self) -> usize {
        self.u_lin[0].len()
    }

    /// Continuity defect `phi_bar_k - x_{k+1}`.
    pub fn defect(&self, k: usize) -> Vector {
        &self.phi_bar[k] - &self.x_lin[k + 1]
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.horizon();
        if n == 0 {
            return Err(Error::Config("QP horizon is empty".into()));
        }
        let (nx, nu) = (self.nx(), self.nu());
        let lens = [
            ("B", self.b.len(), n),
            ("phi_bar", self.phi_bar.len(), n),
            ("x_lin", self.x_lin.len(), n + 1),
            ("u_lin", self.u_lin.len(), n),
            ("q", self.q.len(), n + 1),
            ("r", self.r.len(), n),
            ("Hx", self.hx.len(), n + 1),
            ("Hu", self.hu.len(), n),
            ("lb", self.lb.len(), n),
            ("ub", self.ub.len(), n),
        ];
        for (name, got, expected) in lens {
            if got != expected {
                return Err(Error::Config(format!("QP field {name} has {got} entries, expected {expected}")));
            }
        }
        let bad = |what: &'static str, e: usize, g: usize| Err(Error::shape(what, e, g));
        for k in 0..n {
            if self.a[k].shape() != (nx, nx) {
                return bad("QP A_k", nx, self.a[k].nrows());
            }
            if self.b[k].shape() != (nx, nu) {
                return bad("QP B_k", nu, self.b[k].ncols());
            }
            if self.hu[k].shape() != (nu, nu) || self.r[k].len() != nu {
                return bad("QP input cost", nu, self.r[k].len());
            }
            if self.lb[k].len() != nu || self.ub[k].len() != nu {
                return bad("QP bounds", nu, self.lb[k].len());
            }
            if self.lb[k].iter().zip(self.ub[k].iter()).any(|(l, u)| !(l <= u)) {
                return Err(Error::Qp(format!("empty bound interval at node {k}")));
            }
        }
        for k in 0..=n {
            if self.hx[k].shape() != (nx, nx) || self.q[k].len() != nx {
                return bad("QP state cost", nx, self.q[k].len());
            }
        }
        Ok(())
    }

    /// Objective of the uncondensed QP.
    pub fn objective(&self, dx: &[Vector], du: &[Vector]) -> f64 {
        let mut f = 0.0;
        for k in 0..=self.horizon() {
            f += self.q[k].dot(&dx[k]) + 0.5 * dx[k].dot(&(&self.hx[k] * &dx[k]));
        }
        for k in 0..self.horizon() {
            f += self.r[k].dot(&du[k]) + 0.5 * du[k].dot(&(&self.hu[k] * &du[k]));
        }
        f
    }

    /// Largest continuity violation of a candidate `(dx, du)`.
    pub fn continuity_residual(&self, dx: &[Vector], du: &[Vector]) -> f64 {
        (0..self.horizon())
            .map(|k| (&self.a[k] * &dx[k] + &self.b[k] * &du[k] + self.defect(k) - &dx[k + 1]).amax())
            .fold(0.0, f64::max)
    }
}
