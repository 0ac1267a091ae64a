//! Primal active-set method for `min 1/2 x'Hx + g'x  s.t.  lb <= x <= ub`.
//!
//! Starts from a feasible point, keeps bound-active variables fixed, and on
//! the free set solves the equality-constrained subproblem by Cholesky. Ties
//! (blocking bounds, multipliers) are broken by the lowest index, so the
//! active-set path is a deterministic function of the inputs.

use serde::{Deserialize, Serialize};

use super::condense::CondensedQp;
use crate::error::{Error, Result};
use crate::{Matrix, Vector};

pub const MAX_ITERATIONS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundState {
    Free,
    Lower,
    Upper,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum QpStatus {
    Optimal,
    /// Stopped at the iteration cap; the point is feasible but not optimal.
    IterationLimit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoxQpSolution {
    pub x: Vector,
    /// Multipliers of the lower and upper bounds (nonnegative at optimum).
    pub lambda_lb: Vector,
    pub lambda_ub: Vector,
    pub status: QpStatus,
    pub iterations: usize,
    pub active: Vec<BoundState>,
    /// Objective after each iteration, starting with the initial point.
    pub objective_trace: Vec<f64>,
    pub regularized: bool,
}

impl BoxQpSolution {
    /// `||Hx + g - lambda_lb + lambda_ub||_inf`.
    pub fn stationarity(&self, h: &Matrix, g: &Vector) -> f64 {
        (h * &self.x + g - &self.lambda_lb + &self.lambda_ub).amax()
    }

    /// Largest `|lambda_i * slack_i|`.
    pub fn complementarity(&self, lb: &Vector, ub: &Vector) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.x.len() {
            if self.lambda_lb[i] != 0.0 {
                worst = worst.max((self.lambda_lb[i] * (self.x[i] - lb[i])).abs());
            }
            if self.lambda_ub[i] != 0.0 {
                worst = worst.max((self.lambda_ub[i] * (ub[i] - self.x[i])).abs());
            }
        }
        worst
    }
}

fn objective(h: &Matrix, g: &Vector, x: &Vector) -> f64 {
    g.dot(x) + 0.5 * x.dot(&(h * x))
}

/// Solve `H_FF y = rhs` on the free index set, regularizing if needed.
fn solve_free(h: &Matrix, free: &[usize], rhs: &Vector, regularized: &mut bool) -> Result<Vector> {
    let nf = free.len();
    let hff = Matrix::from_fn(nf, nf, |r, c| h[(free[r], free[c])]);
    if let Some(ch) = hff.clone().cholesky() {
        return Ok(ch.solve(rhs));
    }
    let n = h.nrows() as f64;
    let eps = 1e-9 * (h.trace().abs() / n).max(f64::MIN_POSITIVE);
    log::warn!("box QP: reduced Hessian not positive definite, adding {eps:e} I");
    *regularized = true;
    let reg = hff + Matrix::identity(nf, nf) * eps;
    reg.cholesky()
        .map(|ch| ch.solve(rhs))
        .ok_or_else(|| Error::Qp("Hessian is not positive definite even after regularization".into()))
}

/// Solve a condensed box QP, optionally warm-started from a previous active set.
pub fn solve_box_qp(qp: &CondensedQp, warm: Option<&[BoundState]>) -> Result<BoxQpSolution> {
    solve_box_qp_raw(&qp.h, &qp.g, &qp.lb, &qp.ub, warm)
}

/// [`solve_box_qp`] on bare matrices.
pub fn solve_box_qp_raw(
    h: &Matrix,
    g: &Vector,
    lb: &Vector,
    ub: &Vector,
    warm: Option<&[BoundState]>,
) -> Result<BoxQpSolution> {
    let n = g.len();
    if h.shape() != (n, n) || lb.len() != n || ub.len() != n {
        return Err(Error::shape("box QP", n, h.nrows()));
    }
    if let Some(i) = (0..n).find(|&i| !(lb[i] <= ub[i])) {
        return Err(Error::Qp(format!("bound {i} has lb > ub")));
    }
    if !(h.iter().all(|v| v.is_finite()) && g.iter().all(|v| v.is_finite())) {
        return Err(Error::Qp("non-finite QP data".into()));
    }

    // Feasible start: active variables at their bound, free ones at 0 clipped.
    let mut state = vec![BoundState::Free; n];
    if let Some(w) = warm.filter(|w| w.len() == n) {
        for i in 0..n {
            state[i] = match w[i] {
                BoundState::Lower if lb[i].is_finite() => BoundState::Lower,
                BoundState::Upper if ub[i].is_finite() => BoundState::Upper,
                _ => BoundState::Free,
            };
        }
    }
    let mut x = Vector::from_fn(n, |i, _| match state[i] {
        BoundState::Lower => lb[i],
        BoundState::Upper => ub[i],
        BoundState::Free => 0.0f64.clamp(lb[i], ub[i]),
    });

    let scale = 1.0 + g.amax() + h.amax();
    let dual_tol = 1e-12 * scale;
    let mut regularized = false;
    let mut trace = vec![objective(h, g, &x)];
    let mut iterations = 0;
    let mut status = QpStatus::IterationLimit;

    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let free: Vec<usize> = (0..n).filter(|&i| state[i] == BoundState::Free).collect();
        // Subproblem optimum y on the free set with fixed variables held.
        let mut target = x.clone();
        if !free.is_empty() {
            let mut rhs = Vector::from_fn(free.len(), |r, _| -g[free[r]]);
            for (r, &i) in free.iter().enumerate() {
                for j in 0..n {
                    if state[j] != BoundState::Free {
                        rhs[r] -= h[(i, j)] * x[j];
                    }
                }
            }
            let y = solve_free(h, &free, &rhs, &mut regularized)?;
            for (r, &i) in free.iter().enumerate() {
                target[i] = y[r];
            }
        }

        // Longest feasible step towards the subproblem optimum.
        let mut alpha = 1.0;
        let mut blocking: Option<(usize, BoundState)> = None;
        for &i in &free {
            let d = target[i] - x[i];
            let (ratio, side) = if target[i] < lb[i] {
                ((lb[i] - x[i]) / d, BoundState::Lower)
            } else if target[i] > ub[i] {
                ((ub[i] - x[i]) / d, BoundState::Upper)
            } else {
                continue;
            };
            // Strict comparison keeps the lowest index on ties.
            if blocking.is_none() || ratio < alpha {
                alpha = ratio.clamp(0.0, 1.0);
                blocking = Some((i, side));
            }
        }

        if let Some((i, side)) = blocking {
            for &j in &free {
                x[j] += alpha * (target[j] - x[j]);
            }
            x[i] = if side == BoundState::Lower { lb[i] } else { ub[i] };
            state[i] = side;
            trace.push(objective(h, g, &x));
            continue;
        }

        x = target;
        trace.push(objective(h, g, &x));
        let grad = h * &x + g;
        // Release the bound with the most negative multiplier.
        let mut worst: Option<(usize, f64)> = None;
        for i in 0..n {
            let lambda = match state[i] {
                BoundState::Lower => grad[i],
                BoundState::Upper => -grad[i],
                BoundState::Free => continue,
            };
            if lambda < -dual_tol && worst.is_none_or(|(_, w)| lambda < w) {
                worst = Some((i, lambda));
            }
        }
        match worst {
            Some((i, _)) => state[i] = BoundState::Free,
            None => {
                status = QpStatus::Optimal;
                break;
            }
        }
    }

    let grad = h * &x + g;
    let mut lambda_lb = Vector::zeros(n);
    let mut lambda_ub = Vector::zeros(n);
    for i in 0..n {
        match state[i] {
            BoundState::Lower => lambda_lb[i] = grad[i],
            BoundState::Upper => lambda_ub[i] = -grad[i],
            BoundState::Free => {}
        }
    }
    if status == QpStatus::IterationLimit {
        log::warn!("box QP stopped after {MAX_ITERATIONS} iterations");
    }
    Ok(BoxQpSolution {
        x,
        lambda_lb,
        lambda_ub,
        status,
        iterations,
        active: state,
        objective_trace: trace,
        regularized,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_problem(n: usize, seed: u64) -> (Matrix, Vector, Vector, Vector) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = Matrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let h = &m * m.transpose() + Matrix::identity(n, n) * 0.1;
        let g = Vector::from_fn(n, |_, _| rng.random_range(-3.0..3.0));
        let lb = Vector::from_fn(n, |_, _| rng.random_range(-1.0..0.0));
        let ub = Vector::from_fn(n, |_, _| rng.random_range(0.0..1.0));
        (h, g, lb, ub)
    }

    /// Exhaustive oracle: try every Free/Lower/Upper pattern and keep the
    /// one satisfying all KKT conditions.
    fn enumerate(h: &Matrix, g: &Vector, lb: &Vector, ub: &Vector) -> Vector {
        let n = g.len();
        let mut best: Option<(f64, Vector)> = None;
        for code in 0..3usize.pow(n as u32) {
            let mut c = code;
            let pattern: Vec<u8> = (0..n).map(|_| { let p = (c % 3) as u8; c /= 3; p }).collect();
            let mut x = Vector::zeros(n);
            let free: Vec<usize> = (0..n).filter(|&i| pattern[i] == 0).collect();
            for i in 0..n {
                match pattern[i] {
                    1 => x[i] = lb[i],
                    2 => x[i] = ub[i],
                    _ => {}
                }
            }
            if !free.is_empty() {
                let hff = Matrix::from_fn(free.len(), free.len(), |r, c| h[(free[r], free[c])]);
                let rhs = Vector::from_fn(free.len(), |r, _| {
                    let i = free[r];
                    -g[i] - (0..n).filter(|j| pattern[*j] != 0).map(|j| h[(i, j)] * x[j]).sum::<f64>()
                });
                let y = hff.lu().solve(&rhs).unwrap();
                for (r, &i) in free.iter().enumerate() {
                    x[i] = y[r];
                }
            }
            if (0..n).any(|i| x[i] < lb[i] - 1e-12 || x[i] > ub[i] + 1e-12) {
                continue;
            }
            let grad = h * &x + g;
            let dual_ok = (0..n).all(|i| match pattern[i] {
                1 => grad[i] >= -1e-10,
                2 => grad[i] <= 1e-10,
                _ => true,
            });
            if dual_ok {
                let f = objective(h, g, &x);
                if best.as_ref().is_none_or(|(bf, _)| f < *bf) {
                    best = Some((f, x));
                }
            }
        }
        best.expect("strictly convex box QP has a KKT point").1
    }

    #[test]
    fn unconstrained_is_newton_step() {
        let (h, g, _, _) = random_problem(5, 1);
        let inf = Vector::from_element(5, f64::INFINITY);
        let s = solve_box_qp_raw(&h, &g, &(-&inf), &inf, None).unwrap();
        let expected = h.clone().cholesky().unwrap().solve(&(-&g));
        assert!((&s.x - expected).amax() < 1e-12);
        assert_eq!(s.status, QpStatus::Optimal);
    }

    #[test]
    fn one_dimensional_upper_bound() {
        let h = Matrix::from_element(1, 1, 2.0);
        let g = Vector::from_element(1, -10.0);
        let ub = Vector::from_element(1, 1.5);
        let s = solve_box_qp_raw(&h, &g, &Vector::from_element(1, -1.0), &ub, None).unwrap();
        assert_eq!(s.x[0], 1.5);
        assert_eq!(s.lambda_ub[0], -(2.0 * 1.5 - 10.0));
        assert!(s.lambda_ub[0] >= 0.0);
        assert_eq!(s.active, vec![BoundState::Upper]);
    }

    #[test]
    fn matches_enumeration_oracle() {
        for seed in 0..60 {
            let n = 1 + (seed as usize % 6);
            let (h, g, lb, ub) = random_problem(n, 100 + seed);
            let s = solve_box_qp_raw(&h, &g, &lb, &ub, None).unwrap();
            let oracle = enumerate(&h, &g, &lb, &ub);
            assert_eq!(s.status, QpStatus::Optimal);
            assert!((&s.x - oracle).amax() < 1e-9, "seed {seed}");
            assert!(s.stationarity(&h, &g) < 1e-8);
            assert!(s.complementarity(&lb, &ub) < 1e-8);
            assert!(s.lambda_lb.iter().chain(s.lambda_ub.iter()).all(|l| *l >= -1e-10));
            for i in 0..n {
                match s.active[i] {
                    BoundState::Lower => assert_eq!(s.x[i], lb[i]),
                    BoundState::Upper => assert_eq!(s.x[i], ub[i]),
                    BoundState::Free => assert!(s.x[i] >= lb[i] && s.x[i] <= ub[i]),
                }
            }
        }
    }

    #[test]
    fn warm_start_reaches_same_point_faster() {
        let (h, g, lb, ub) = random_problem(8, 7);
        let cold = solve_box_qp_raw(&h, &g, &lb, &ub, None).unwrap();
        let warm = solve_box_qp_raw(&h, &g, &lb, &ub, Some(&cold.active)).unwrap();
        assert!((&cold.x - &warm.x).amax() < 1e-12);
        assert!(warm.iterations <= cold.iterations);
        assert_eq!(warm.iterations, 1);
    }

    #[test]
    fn deterministic_path() {
        let (h, g, lb, ub) = random_problem(8, 9);
        let a = solve_box_qp_raw(&h, &g, &lb, &ub, None).unwrap();
        let b = solve_box_qp_raw(&h, &g, &lb, &ub, None).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn singular_hessian_is_regularized() {
        let h = Matrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let g = Vector::from_column_slice(&[-1.0, -1.0]);
        let b = Vector::from_element(2, 10.0);
        let s = solve_box_qp_raw(&h, &g, &(-&b), &b, None).unwrap();
        assert!(s.regularized);
        assert!((s.x[0] + s.x[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn bad_bounds_rejected() {
        let h = Matrix::identity(1, 1);
        let g = Vector::zeros(1);
        assert!(solve_box_qp_raw(&h, &g, &Vector::from_element(1, 1.0), &Vector::zeros(1), None).is_err());
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(64))]
        #[test]
        fn objective_decreases_monotonically(seed in 0u64..100_000, n in 1usize..12) {
            let (h, g, lb, ub) = random_problem(n, seed);
            let s = solve_box_qp_raw(&h, &g, &lb, &ub, None).unwrap();
            for w in s.objective_trace.windows(2) {
                proptest::prop_assert!(w[1] <= w[0] + 1e-12 * (1.0 + w[0].abs()));
            }
            proptest::prop_assert!(s.stationarity(&h, &g) < 1e-8);
        }
    }
}
