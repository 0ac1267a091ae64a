//! Local Taylor approximations of the residual network at the shooting nodes.
//!
//! In feature space `z`:
//!
//! ```text
//! f_D(z) ~ f_bar + J (z - z0) [+ 1/2 (z - z0)^T H_o (z - z0) per output o]
//! ```
//!
//! These values are all the QP builder ever sees of the network.

use serde::{Deserialize, Serialize};

use crate::dynamics::residual::ResidualModel;
use crate::error::{Error, Result};
use crate::integrator::EvalCounts;
use crate::neural::{mlp_batched_eval, BatchOrder, MlpModel};
use crate::sqp::Iterate;
use crate::{Matrix, Vector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaylorApprox {
    pub node: usize,
    /// Node state the features were taken at (freezes exogenous inputs).
    pub anchor: Vector,
    pub z0: Vector,
    pub f_bar: Vector,
    /// `out x in`.
    pub jac: Matrix,
    /// Per-output `in x in` Hessians, present iff `order == 2`.
    pub hess: Option<Vec<Matrix>>,
    pub order: u8,
}

fn check_order(order: u8) -> Result<()> {
    if order == 1 || order == 2 {
        Ok(())
    } else {
        Err(Error::Config(format!("Taylor order must be 1 or 2, got {order}")))
    }
}

impl TaylorApprox {
    /// Expand `model` at `z0` with a direct (unbatched) evaluation.
    pub fn at(model: &MlpModel, node: usize, anchor: Vector, z0: Vector, order: u8) -> Result<Self> {
        check_order(order)?;
        let batch = mlp_batched_eval(
            model,
            std::slice::from_ref(&z0),
            if order == 2 { BatchOrder::Hessian } else { BatchOrder::Jacobian },
        )?;
        Ok(Self {
            node,
            anchor,
            f_bar: batch.values.into_iter().next().expect("one point"),
            jac: batch.jacobians.expect("jacobians").into_iter().next().expect("one point"),
            hess: batch.hessians.map(|h| h.into_iter().next().expect("one point")),
            z0,
            order,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Format(e.to_string()))
    }
}

/// One approximation per shooting node `k = 0..N-1`, expanded at the
/// iterate's `(x_k, u_k)`, built from a single batched network call.
pub fn prepare_nodes(
    residual: &ResidualModel,
    iterate: &Iterate,
    order: u8,
    counts: &mut EvalCounts,
) -> Result<Vec<TaylorApprox>> {
    check_order(order)?;
    let n = iterate.us.len();
    let zs: Vec<Vector> = (0..n)
        .map(|k| {
            let x = &iterate.xs[k];
            residual.features.features(x, &iterate.us[k], x)
        })
        .collect();
    let batch = mlp_batched_eval(
        &residual.network,
        &zs,
        if order == 2 { BatchOrder::Hessian } else { BatchOrder::Jacobian },
    )?;
    counts.net_batches += 1;
    counts.net_batch_points += n as u64;
    let mut hess = batch.hessians.map(|h| h.into_iter());
    Ok(zs
        .into_iter()
        .zip(batch.values)
        .zip(batch.jacobians.expect("jacobians requested"))
        .enumerate()
        .map(|(k, ((z0, f_bar), jac))| TaylorApprox {
            node: k,
            anchor: iterate.xs[k].clone(),
            z0,
            f_bar,
            jac,
            hess: hess.as_mut().map(|h| h.next().expect("one per node")),
            order,
        })
        .collect())
}

/// First- or second-order expansion evaluated at `z`.
pub fn eval_taylor(a: &TaylorApprox, z: &Vector) -> Vector {
    let dz = z - &a.z0;
    let mut y = a.f_bar.clone();
    y.gemv(1.0, &a.jac, &dz, 1.0);
    if let (2, Some(hs)) = (a.order, &a.hess) {
        for (o, h) in hs.iter().enumerate() {
            y[o] += 0.5 * dz.dot(&(h * &dz));
        }
    }
    y
}

/// Jacobian of [`eval_taylor`] with respect to `z`.
pub fn eval_taylor_jacobian(a: &TaylorApprox, z: &Vector) -> Matrix {
    match (a.order, &a.hess) {
        (2, Some(hs)) => {
            let dz = z - &a.z0;
            let mut j = a.jac.clone();
            for (o, h) in hs.iter().enumerate() {
                let row = h * &dz;
                for c in 0..j.ncols() {
                    j[(o, c)] += row[c];
                }
            }
            j
        }
        _ => a.jac.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::residual::{DoubleIntegratorFeatures, ResidualVariant};
    use crate::neural::{mlp_forward, Activation};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn tanh_net(seed: u64) -> MlpModel {
        MlpModel::new(&[2, 12, 12, 2], Activation::Tanh, ResidualVariant::DiState, seed).unwrap()
    }

    fn iterate(n: usize, seed: u64) -> Iterate {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Iterate {
            xs: (0..=n).map(|_| Vector::from_fn(2, |_, _| rng.random_range(-1.0..1.0))).collect(),
            us: (0..n).map(|_| Vector::from_fn(1, |_, _| rng.random_range(-1.0..1.0))).collect(),
        }
    }

    fn residual(net: MlpModel) -> ResidualModel {
        ResidualModel::new(Arc::new(net), Arc::new(DoubleIntegratorFeatures)).unwrap()
    }

    #[test]
    fn zero_model_gives_zero_approximations() {
        let mut net = tanh_net(1);
        net.zero_output_layer();
        let mut counts = EvalCounts::default();
        let approx = prepare_nodes(&residual(net), &iterate(10, 0), 1, &mut counts).unwrap();
        assert_eq!(approx.len(), 10);
        assert!(approx.iter().all(|a| a.f_bar.iter().all(|v| *v == 0.0) && a.jac.iter().all(|v| *v == 0.0)));
        assert_eq!(counts.net_batches, 1);
        assert_eq!(counts.net_batch_points, 10);
        assert_eq!(counts.net_value + counts.net_jacobian, 0);
    }

    #[test]
    fn identical_nodes_identical_approximations() {
        let mut it = iterate(6, 2);
        let x = it.xs[0].clone();
        let u = it.us[0].clone();
        it.xs.iter_mut().for_each(|v| *v = x.clone());
        it.us.iter_mut().for_each(|v| *v = u.clone());
        let approx = prepare_nodes(&residual(tanh_net(3)), &it, 2, &mut EvalCounts::default()).unwrap();
        for a in &approx[1..] {
            assert_eq!(a.f_bar, approx[0].f_bar);
            assert_eq!(a.jac, approx[0].jac);
            assert_eq!(a.hess, approx[0].hess);
        }
    }

    #[test]
    fn per_node_values_equal_unbatched_calls() {
        let net = tanh_net(4);
        let it = iterate(10, 5);
        let approx = prepare_nodes(&residual(net.clone()), &it, 1, &mut EvalCounts::default()).unwrap();
        for (k, a) in approx.iter().enumerate() {
            assert_eq!(a.z0, it.xs[k]);
            assert_eq!(a.f_bar, mlp_forward(&net, &it.xs[k]).unwrap());
            assert_eq!(a.jac, net.jacobian(&it.xs[k]));
            assert!(a.hess.is_none());
            let single = TaylorApprox::at(&net, k, it.xs[k].clone(), it.xs[k].clone(), 1).unwrap();
            assert_eq!(&single, a);
        }
    }

    #[test]
    fn expansion_point_is_exact() {
        let net = tanh_net(6);
        let z0 = Vector::from_column_slice(&[0.3, -0.4]);
        for order in [1, 2] {
            let a = TaylorApprox::at(&net, 0, z0.clone(), z0.clone(), order).unwrap();
            assert_eq!(eval_taylor(&a, &z0), a.f_bar);
            assert_eq!(eval_taylor_jacobian(&a, &z0), a.jac);
        }
        assert!(TaylorApprox::at(&net, 0, z0.clone(), z0, 3).is_err());
    }

    #[test]
    fn linear_model_is_reproduced() {
        let w = Matrix::from_row_slice(2, 2, &[1.0, -2.0, 0.5, 0.25]);
        let b = Vector::from_column_slice(&[0.1, -0.3]);
        let net = MlpModel::from_layers(vec![(w, b)], Activation::Tanh, ResidualVariant::DiState).unwrap();
        let z0 = Vector::from_column_slice(&[1.0, 2.0]);
        for order in [1, 2] {
            let a = TaylorApprox::at(&net, 0, z0.clone(), z0.clone(), order).unwrap();
            for s in 0..10 {
                let z = Vector::from_column_slice(&[s as f64 * 0.7 - 3.0, 1.5 - s as f64]);
                assert!((eval_taylor(&a, &z) - net.forward(&z)).amax() < 1e-13);
            }
        }
    }

    #[test]
    fn first_order_jacobian_is_constant() {
        let net = tanh_net(8);
        let z0 = Vector::from_column_slice(&[0.1, 0.2]);
        let a = TaylorApprox::at(&net, 0, z0.clone(), z0, 1).unwrap();
        assert_eq!(eval_taylor_jacobian(&a, &Vector::from_column_slice(&[5.0, -3.0])), a.jac);
    }

    #[test]
    fn second_order_jacobian_matches_finite_differences() {
        let net = tanh_net(9);
        let z0 = Vector::from_column_slice(&[0.2, -0.1]);
        let a = TaylorApprox::at(&net, 0, z0.clone(), z0, 2).unwrap();
        let z = Vector::from_column_slice(&[0.9, 0.4]);
        let j = eval_taylor_jacobian(&a, &z);
        let h = 1e-6;
        for c in 0..2 {
            let (mut zp, mut zm) = (z.clone(), z.clone());
            zp[c] += h;
            zm[c] -= h;
            let fd = (eval_taylor(&a, &zp) - eval_taylor(&a, &zm)) / (2.0 * h);
            assert!((j.column(c) - fd).amax() < 1e-6);
        }
    }

    #[test]
    fn json_round_trip() {
        let net = tanh_net(10);
        let z0 = Vector::from_column_slice(&[0.5, 0.5]);
        let a = TaylorApprox::at(&net, 3, z0.clone(), z0, 2).unwrap();
        assert_eq!(TaylorApprox::from_json(&a.to_json().unwrap()).unwrap(), a);
    }
}
