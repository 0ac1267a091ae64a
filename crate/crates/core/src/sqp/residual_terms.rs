//! [`StageResidual`] implementations: none, Taylor approximations (rtn) and
//! direct network calls inside the integrator (naive).

use std::cell::Cell;

use super::build::StageResidual;
use crate::dynamics::residual::{embed_jacobian, FeatureMap, ResidualModel};
use crate::taylor::{eval_taylor, eval_taylor_jacobian, TaylorApprox};
use crate::{Matrix, Vector};

/// Purely nominal model.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoResidual;

impl StageResidual for NoResidual {
    fn add_value(&self, _k: usize, _x: &Vector, _u: &Vector, _f: &mut Vector) {}

    fn add_jacobians(&self, _k: usize, _x: &Vector, _u: &Vector, _fx: &mut Matrix, _fu: &mut Matrix) {}
}

/// Residual represented by one prepared [`TaylorApprox`] per node.
pub struct TaylorResidual<'a> {
    approx: &'a [TaylorApprox],
    features: &'a dyn FeatureMap,
}

impl<'a> TaylorResidual<'a> {
    pub fn new(approx: &'a [TaylorApprox], features: &'a dyn FeatureMap) -> Self {
        Self { approx, features }
    }
}

impl StageResidual for TaylorResidual<'_> {
    fn add_value(&self, k: usize, x: &Vector, u: &Vector, f: &mut Vector) {
        let a = &self.approx[k];
        let y = eval_taylor(a, &self.features.features(x, u, &a.anchor));
        for (o, &r) in self.features.variant().output_rows().iter().enumerate() {
            f[r] += y[o];
        }
    }

    fn add_jacobians(&self, k: usize, x: &Vector, u: &Vector, fx: &mut Matrix, fu: &mut Matrix) {
        let a = &self.approx[k];
        let z = self.features.features(x, u, &a.anchor);
        let jxu = eval_taylor_jacobian(a, &z) * self.features.feature_jacobian(x, u, &a.anchor);
        embed_jacobian(self.features.variant().output_rows(), &jxu, fx, fu);
    }
}

/// Residual network called at every RK4 stage; tallies its calls.
pub struct NaiveResidual<'a> {
    model: &'a ResidualModel,
    anchors: &'a [Vector],
    value_calls: Cell<u64>,
    jacobian_calls: Cell<u64>,
}

impl<'a> NaiveResidual<'a> {
    /// `anchors[k]` is the node state that freezes exogenous features.
    pub fn new(model: &'a ResidualModel, anchors: &'a [Vector]) -> Self {
        Self {
            model,
            anchors,
            value_calls: Cell::new(0),
            jacobian_calls: Cell::new(0),
        }
    }

    pub fn value_calls(&self) -> u64 {
        self.value_calls.get()
    }

    pub fn jacobian_calls(&self) -> u64 {
        self.jacobian_calls.get()
    }
}

impl StageResidual for NaiveResidual<'_> {
    fn add_value(&self, k: usize, x: &Vector, u: &Vector, f: &mut Vector) {
        let z = self.model.features.features(x, u, &self.anchors[k]);
        let y = self.model.network.forward(&z);
        self.value_calls.set(self.value_calls.get() + 1);
        for (o, &r) in self.model.variant().output_rows().iter().enumerate() {
            f[r] += y[o];
        }
    }

    fn add_jacobians(&self, k: usize, x: &Vector, u: &Vector, fx: &mut Matrix, fu: &mut Matrix) {
        let anchor = &self.anchors[k];
        let z = self.model.features.features(x, u, anchor);
        let jz = self.model.network.jacobian(&z);
        self.jacobian_calls.set(self.jacobian_calls.get() + 1);
        let jxu = jz * self.model.features.feature_jacobian(x, u, anchor);
        embed_jacobian(self.model.variant().output_rows(), &jxu, fx, fu);
    }
}
