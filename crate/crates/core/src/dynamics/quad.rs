//! Rigid-body quadrotor model.
//!
//! State layout (13): position `p_WB` (0..3), attitude quaternion `q_WB`
//! scalar-first (3..7), world-frame velocity `v_WB` (7..10), body rates
//! `omega_B` (10..13). Inputs are the four rotor thrusts.
//!
//! Rotor geometry is an X configuration, rotors numbered counter-clockwise
//! from front-left, `d = arm_length / sqrt(2)`:
//!
//! ```text
//!        +x
//!    1  ^  0        0: (+d, +d)   1: (-d, +d)
//!     \ | /         2: (-d, -d)   3: (+d, -d)
//!  +y <-+
//!     /   \
//!    2     3
//! ```
//!
//! A rotor at `(x_i, y_i)` with thrust `T_i` produces roll torque `y_i T_i`,
//! pitch torque `-x_i T_i` and yaw torque `rotor_sign[i] * kappa * T_i`.

use nalgebra::{Matrix3, Matrix4, Quaternion, Vector3, Vector4};

use crate::error::{Error, Result};
use crate::{Matrix, Vector};

use super::params::QuadParams;
use super::{Dynamics, GRAVITY};

pub const STATE_DIM: usize = 13;
pub const INPUT_DIM: usize = 4;
pub const POS: usize = 0;
pub const QUAT: usize = 3;
pub const VEL: usize = 7;
pub const RATE: usize = 10;

/// Tolerance on `|q| - 1` accepted by the typed entry points.
pub const UNIT_TOLERANCE: f64 = 1e-6;

const ROTOR_XY: [[f64; 2]; 4] = [[1.0, 1.0], [-1.0, 1.0], [-1.0, -1.0], [1.0, -1.0]];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadState {
    pub position: Vector3<f64>,
    /// Unit quaternion, world from body.
    pub attitude: Quaternion<f64>,
    pub velocity: Vector3<f64>,
    pub body_rate: Vector3<f64>,
}

impl QuadState {
    /// Builds a state, normalizing the attitude.
    pub fn new(
        position: Vector3<f64>,
        attitude: Quaternion<f64>,
        velocity: Vector3<f64>,
        body_rate: Vector3<f64>,
    ) -> Result<Self> {
        let n = attitude.norm();
        if !(n.is_finite() && n > 1e-12) {
            return Err(Error::InputDomain("attitude quaternion has zero norm".into()));
        }
        let s = Self {
            position,
            attitude: attitude / n,
            velocity,
            body_rate,
        };
        if !s.to_vector().iter().all(|v| v.is_finite()) {
            return Err(Error::InputDomain("state has non-finite entries".into()));
        }
        Ok(s)
    }

    pub fn hover_at(position: Vector3<f64>) -> Self {
        Self {
            position,
            attitude: Quaternion::identity(),
            velocity: Vector3::zeros(),
            body_rate: Vector3::zeros(),
        }
    }

    /// Reads the 13-vector layout without renormalizing.
    pub fn from_vector(x: &Vector) -> Result<Self> {
        if x.len() != STATE_DIM {
            return Err(Error::shape("QuadState", STATE_DIM, x.len()));
        }
        Ok(Self {
            position: Vector3::new(x[0], x[1], x[2]),
            attitude: Quaternion::new(x[3], x[4], x[5], x[6]),
            velocity: Vector3::new(x[7], x[8], x[9]),
            body_rate: Vector3::new(x[10], x[11], x[12]),
        })
    }

    pub fn to_vector(&self) -> Vector {
        let q = &self.attitude;
        Vector::from_column_slice(&[
            self.position.x,
            self.position.y,
            self.position.z,
            q.w,
            q.i,
            q.j,
            q.k,
            self.velocity.x,
            self.velocity.y,
            self.velocity.z,
            self.body_rate.x,
            self.body_rate.y,
            self.body_rate.z,
        ])
    }

    fn check_unit(&self) -> Result<()> {
        let n = self.attitude.norm();
        if (n - 1.0).abs() > UNIT_TOLERANCE {
            return Err(Error::InputDomain(format!(
                "attitude quaternion norm {n} is not unit"
            )));
        }
        Ok(())
    }
}

/// Four rotor thrusts, N.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotorThrusts(pub [f64; 4]);

impl RotorThrusts {
    pub fn new(t: [f64; 4], params: &QuadParams) -> Result<Self> {
        if t.iter().any(|ti| !(0.0..=params.u_max).contains(ti)) {
            return Err(Error::InputDomain(format!(
                "rotor thrusts {t:?} outside [0, {}]",
                params.u_max
            )));
        }
        Ok(Self(t))
    }

    pub fn hover(params: &QuadParams) -> Self {
        Self([params.hover_thrust(); 4])
    }

    pub fn to_vector(&self) -> Vector {
        Vector::from_column_slice(&self.0)
    }
}

/// Rotation matrix of `v -> q v q*` for an arbitrary (not necessarily unit)
/// quaternion `[w, x, y, z]`. For unit quaternions this is the usual rotation.
pub fn rotation_matrix(q: &[f64]) -> Matrix3<f64> {
    let (w, x, y, z) = (q[0], q[1], q[2], q[3]);
    Matrix3::new(
        w * w + x * x - y * y - z * z,
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        w * w - x * x + y * y - z * z,
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        w * w - x * x - y * y + z * z,
    )
}

/// `d(q v q*)/dq`, 3x4, columns ordered `w, x, y, z`.
pub fn rotation_jacobian(q: &[f64], v: &Vector3<f64>) -> nalgebra::Matrix3x4<f64> {
    let (w, x, y, z) = (q[0], q[1], q[2], q[3]);
    let (a, b, c) = (v.x, v.y, v.z);
    2.0 * nalgebra::Matrix3x4::new(
        w * a - z * b + y * c,
        x * a + y * b + z * c,
        -y * a + x * b + w * c,
        -z * a - w * b + x * c,
        z * a + w * b - x * c,
        y * a - x * b - w * c,
        x * a + y * b + z * c,
        w * a - z * b + y * c,
        -y * a + x * b + w * c,
        z * a + w * b - x * c,
        -w * a + z * b - y * c,
        x * a + y * b + z * c,
    )
}

/// Rows: collective thrust, roll, pitch and yaw torque; columns: rotors.
pub fn mixing_matrix(params: &QuadParams) -> Matrix4<f64> {
    let d = params.arm_length / std::f64::consts::SQRT_2;
    let mut m = Matrix4::zeros();
    for (i, xy) in ROTOR_XY.iter().enumerate() {
        m[(0, i)] = 1.0;
        m[(1, i)] = d * xy[1];
        m[(2, i)] = -d * xy[0];
        m[(3, i)] = params.rotor_sign[i] * params.kappa;
    }
    m
}

/// Collective body thrust `(0, 0, sum T_i)` and body torque.
pub fn mix_thrust_torque(u: &RotorThrusts, params: &QuadParams) -> (Vector3<f64>, Vector3<f64>) {
    let w = mixing_matrix(params) * Vector4::from(u.0);
    (Vector3::new(0.0, 0.0, w[0]), Vector3::new(w[1], w[2], w[3]))
}

/// Nominal rigid-body dynamics on the raw state layout; no domain checks.
pub fn nominal_derivative(x: &Vector, u: &Vector, params: &QuadParams) -> Vector {
    let q = [x[3], x[4], x[5], x[6]];
    let omega = Vector3::new(x[10], x[11], x[12]);
    let mix = mixing_matrix(params) * Vector4::new(u[0], u[1], u[2], u[3]);
    let thrust_w = rotation_matrix(&q).column(2) * (mix[0] / params.mass);
    let tau = Vector3::new(mix[1], mix[2], mix[3]);
    let j = Vector3::from(params.inertia);
    let omega_dot = (tau - omega.cross(&j.component_mul(&omega))).component_div(&j);

    let mut d = Vector::zeros(STATE_DIM);
    d[0] = x[7];
    d[1] = x[8];
    d[2] = x[9];
    // q * (0, omega / 2)
    d[3] = 0.5 * (-q[1] * omega.x - q[2] * omega.y - q[3] * omega.z);
    d[4] = 0.5 * (q[0] * omega.x + q[2] * omega.z - q[3] * omega.y);
    d[5] = 0.5 * (q[0] * omega.y - q[1] * omega.z + q[3] * omega.x);
    d[6] = 0.5 * (q[0] * omega.z + q[1] * omega.y - q[2] * omega.x);
    for i in 0..3 {
        d[VEL + i] = thrust_w[i] + GRAVITY[i];
        d[RATE + i] = omega_dot[i];
    }
    d
}

/// Typed nominal dynamics; rejects non-unit attitudes.
pub fn quad_nominal_dynamics(x: &QuadState, u: &RotorThrusts, params: &QuadParams) -> Result<Vector> {
    x.check_unit()?;
    Ok(nominal_derivative(&x.to_vector(), &u.to_vector(), params))
}

/// Closed-form `(df/dx, df/du)` of [`nominal_derivative`].
pub fn nominal_jacobians(x: &Vector, u: &Vector, params: &QuadParams) -> (Matrix, Matrix) {
    let q = [x[3], x[4], x[5], x[6]];
    let omega = Vector3::new(x[10], x[11], x[12]);
    let mix = mixing_matrix(params);
    let thrust = (mix.row(0) * Vector4::new(u[0], u[1], u[2], u[3]))[0];
    let j = Vector3::from(params.inertia);

    let mut fx = Matrix::zeros(STATE_DIM, STATE_DIM);
    let mut fu = Matrix::zeros(STATE_DIM, INPUT_DIM);

    for i in 0..3 {
        fx[(POS + i, VEL + i)] = 1.0;
    }

    // Quaternion kinematics.
    let (wx, wy, wz) = (omega.x, omega.y, omega.z);
    let dq_dq = 0.5
        * Matrix4::new(
            0.0, -wx, -wy, -wz, //
            wx, 0.0, wz, -wy, //
            wy, -wz, 0.0, wx, //
            wz, wy, -wx, 0.0,
        );
    let dq_dw = 0.5
        * nalgebra::Matrix4x3::new(
            -q[1], -q[2], -q[3], //
            q[0], -q[3], q[2], //
            q[3], q[0], -q[1], //
            -q[2], q[1], q[0],
        );
    fx.view_mut((QUAT, QUAT), (4, 4)).copy_from(&dq_dq);
    fx.view_mut((QUAT, RATE), (4, 3)).copy_from(&dq_dw);

    // Translational: (1/m) R(q) e_z T.
    let dv_dq = rotation_jacobian(&q, &Vector3::new(0.0, 0.0, thrust / params.mass));
    fx.view_mut((VEL, QUAT), (3, 4)).copy_from(&dv_dq);
    let z_axis = rotation_matrix(&q).column(2) / params.mass;
    for r in 0..INPUT_DIM {
        for i in 0..3 {
            fu[(VEL + i, r)] = z_axis[i] * mix[(0, r)];
        }
    }

    // Euler: J^-1 (tau - omega x J omega).
    let jw = j.component_mul(&omega);
    let d_gyro = omega.cross_matrix() * Matrix3::from_diagonal(&j) - jw.cross_matrix();
    for r in 0..3 {
        for c in 0..3 {
            fx[(RATE + r, RATE + c)] = -d_gyro[(r, c)] / j[r];
        }
        for c in 0..INPUT_DIM {
            fu[(RATE + r, c)] = mix[(1 + r, c)] / j[r];
        }
    }
    (fx, fu)
}

/// Nominal quadrotor model behind the [`Dynamics`] interface.
#[derive(Debug, Clone)]
pub struct QuadModel {
    pub params: QuadParams,
}

impl QuadModel {
    pub fn new(params: QuadParams) -> Result<Self> {
        params.validate()?;
        Ok(Self { params })
    }
}

impl Dynamics for QuadModel {
    fn state_dim(&self) -> usize {
        STATE_DIM
    }

    fn input_dim(&self) -> usize {
        INPUT_DIM
    }

    fn eval(&self, x: &Vector, u: &Vector) -> Vector {
        nominal_derivative(x, u, &self.params)
    }

    fn jacobians(&self, x: &Vector, u: &Vector) -> (Matrix, Matrix) {
        nominal_jacobians(x, u, &self.params)
    }

    fn normalize(&self, x: &mut Vector) {
        normalize_quaternion(x);
    }

    fn steady_input(&self) -> Vector {
        RotorThrusts::hover(&self.params).to_vector()
    }
}

/// Renormalize the attitude rows of a 13-vector in place.
pub fn normalize_quaternion(x: &mut Vector) {
    let n = x.rows(QUAT, 4).norm();
    if n > 0.0 {
        x.rows_mut(QUAT, 4).unscale_mut(n);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn params() -> QuadParams {
        QuadParams::default()
    }

    fn central_diff(f: impl Fn(&Vector) -> Vector, x: &Vector, h: f64) -> Matrix {
        let n = f(x).len();
        let mut jac = Matrix::zeros(n, x.len());
        for c in 0..x.len() {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[c] += h;
            xm[c] -= h;
            jac.set_column(c, &((f(&xp) - f(&xm)) / (2.0 * h)));
        }
        jac
    }

    #[test]
    fn hover_is_equilibrium() {
        let p = params();
        let x = QuadState::hover_at(Vector3::new(1.0, 2.0, 3.0));
        let d = quad_nominal_dynamics(&x, &RotorThrusts::hover(&p), &p).unwrap();
        assert!(d.iter().all(|v| v.abs() < 1e-15), "{d}");
    }

    #[test]
    fn free_fall_without_thrust() {
        let p = params();
        let x = QuadState::hover_at(Vector3::zeros());
        let d = quad_nominal_dynamics(&x, &RotorThrusts([0.0; 4]), &p).unwrap();
        assert_eq!(d[VEL], 0.0);
        assert_eq!(d[VEL + 1], 0.0);
        assert_eq!(d[VEL + 2], -9.81);
    }

    #[test]
    fn rejects_non_unit_quaternion() {
        let p = params();
        let mut x = QuadState::hover_at(Vector3::zeros());
        x.attitude = Quaternion::new(1.1, 0.0, 0.0, 0.0);
        assert!(matches!(
            quad_nominal_dynamics(&x, &RotorThrusts::hover(&p), &p),
            Err(Error::InputDomain(_))
        ));
    }

    #[test]
    fn asymmetric_thrust_angular_acceleration() {
        // Oracle: explicit lever-arm cross products and Euler's equation.
        let p = params();
        let c = 2.0;
        let u = RotorThrusts([c, 0.0, c, 0.0]);
        let mut x = QuadState::hover_at(Vector3::zeros());
        x.body_rate = Vector3::new(0.3, -0.2, 0.5);
        let d = quad_nominal_dynamics(&x, &u, &p).unwrap();

        let arm = p.arm_length / 2f64.sqrt();
        let pos = [[arm, arm], [-arm, arm], [-arm, -arm], [arm, -arm]];
        let mut tau = Vector3::zeros();
        for i in 0..4 {
            let r = Vector3::new(pos[i][0], pos[i][1], 0.0);
            tau += r.cross(&Vector3::new(0.0, 0.0, u.0[i]));
            tau.z += p.rotor_sign[i] * p.kappa * u.0[i];
        }
        let j = Matrix3::from_diagonal(&Vector3::from(p.inertia));
        let w = x.body_rate;
        let expected = j.try_inverse().unwrap() * (tau - w.cross(&(j * w)));
        for i in 0..3 {
            assert_relative_eq!(d[RATE + i], expected[i], max_relative = 1e-12);
        }
    }

    #[test]
    fn mixing_examples() {
        let p = params();
        let (thrust, tau) = mix_thrust_torque(&RotorThrusts([1.5; 4]), &p);
        assert_eq!(thrust, Vector3::new(0.0, 0.0, 6.0));
        assert!(tau.norm() < 1e-15);

        let t = 2.0;
        let (_, tau) = mix_thrust_torque(&RotorThrusts([t, 0.0, 0.0, 0.0]), &p);
        let expected = p.arm_length * t / 2f64.sqrt();
        assert_relative_eq!(tau.x.abs(), expected, max_relative = 1e-14);
        assert_relative_eq!(tau.y.abs(), expected, max_relative = 1e-14);

        // Same-spin diagonal pair up, the other pair down: pure yaw.
        let base = 2.0;
        let delta = 0.5;
        let (thrust, tau) = mix_thrust_torque(
            &RotorThrusts([base + delta, base - delta, base + delta, base - delta]),
            &p,
        );
        assert_eq!(thrust.z, 4.0 * base);
        assert!(tau.x.abs() < 1e-15 && tau.y.abs() < 1e-15);
        assert_eq!(tau.z.signum(), p.rotor_sign[0]);
        assert_relative_eq!(tau.z.abs(), 4.0 * delta * p.kappa, max_relative = 1e-14);
    }

    #[test]
    fn jacobians_match_finite_differences() {
        let p = params();
        let x = QuadState::new(
            Vector3::new(0.1, -0.2, 1.0),
            Quaternion::new(0.9, 0.1, -0.3, 0.2),
            Vector3::new(1.0, -2.0, 0.5),
            Vector3::new(0.4, -1.0, 2.0),
        )
        .unwrap()
        .to_vector();
        let u = Vector::from_column_slice(&[1.0, 2.5, 1.7, 3.0]);
        let (fx, fu) = nominal_jacobians(&x, &u, &p);
        let fd_x = central_diff(|xx| nominal_derivative(xx, &u, &p), &x, 1e-6);
        let fd_u = central_diff(|uu| nominal_derivative(&x, uu, &p), &u, 1e-6);
        assert!((&fx - &fd_x).amax() < 1e-7, "{}", (&fx - &fd_x).amax());
        assert!((&fu - &fd_u).amax() < 1e-7);
        for i in 0..3 {
            for c in 0..3 {
                assert_eq!(fx[(POS + i, VEL + c)], if i == c { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn thrust_input_jacobian_is_rotated_mixing() {
        let p = params();
        let x = QuadState::new(
            Vector3::zeros(),
            Quaternion::new(0.8, 0.3, 0.1, -0.4),
            Vector3::zeros(),
            Vector3::zeros(),
        )
        .unwrap()
        .to_vector();
        let u = Vector::from_element(4, 1.0);
        let (_, fu) = nominal_jacobians(&x, &u, &p);
        let r = rotation_matrix(&[x[3], x[4], x[5], x[6]]);
        let mix = mixing_matrix(&p);
        for c in 0..4 {
            let expected = r * Vector3::new(0.0, 0.0, mix[(0, c)]) / p.mass;
            for i in 0..3 {
                assert_relative_eq!(fu[(VEL + i, c)], expected[i], max_relative = 1e-14);
            }
        }
    }

    #[test]
    fn quaternion_norm_preserved_after_integration() {
        use crate::integrator::{rk4_step, EvalCounts};
        let p = params();
        let model = QuadModel::new(p.clone()).unwrap();
        let mut counts = EvalCounts::default();
        let mut x = QuadState::hover_at(Vector3::zeros()).to_vector();
        x[RATE] = 12.0;
        x[RATE + 1] = -11.0;
        x[RATE + 2] = 10.0; // |omega| ~ 19.6 rad/s
        let u = RotorThrusts::hover(&p).to_vector();
        for _ in 0..50 {
            let mut next = rk4_step(|a, b| model.eval(a, b), &x, &u, 0.05, &mut counts).unwrap();
            assert!(next.iter().all(|v| v.is_finite()));
            model.normalize(&mut next);
            assert!((next.rows(QUAT, 4).norm() - 1.0).abs() < 1e-6);
            x = next;
        }
    }

    proptest::proptest! {
        #[test]
        fn mixing_is_linear(
            a in -3.0f64..3.0, b in -3.0f64..3.0,
            u1 in proptest::array::uniform4(0.0f64..6.0),
            u2 in proptest::array::uniform4(0.0f64..6.0),
        ) {
            let p = params();
            let m = mixing_matrix(&p);
            let lhs = m * (Vector4::from(u1) * a + Vector4::from(u2) * b);
            let rhs = m * Vector4::from(u1) * a + m * Vector4::from(u2) * b;
            proptest::prop_assert!((lhs - rhs).amax() < 1e-12);
        }
    }
}
