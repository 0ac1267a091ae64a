use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::config::{embedded, SIM};
use crate::dynamics::params::QuadParams;
use crate::dynamics::quad::{nominal_derivative, normalize_quaternion, rotation_matrix, INPUT_DIM, STATE_DIM, VEL, RATE};
use crate::error::{Error, Result};
use crate::integrator::{rk4_step, EvalCounts};
use crate::Vector;

/// How the force/torque offsets are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseMode {
    /// One offset per run, constant throughout.
    Episode,
    /// A fresh offset every control step.
    Step,
}

impl NoiseMode {
    pub fn name(self) -> &'static str {
        match self {
            NoiseMode::Episode => "episode",
            NoiseMode::Step => "step",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    /// Body-frame linear drag per unit mass, 1/s.
    pub drag: [f64; 3],
    /// Std of the force (m/s^2) and torque (rad/s^2) offsets.
    pub noise_ft_sigma: f64,
    /// Thrust noise std is `motor_noise_coeff * sqrt(T)`.
    pub motor_noise_coeff: f64,
    pub noise_mode: NoiseMode,
    pub sim_dt: f64,
    /// Constant world-frame acceleration added to the plant, m/s^2.
    #[serde(default)]
    pub disturbance: [f64; 3],
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        embedded(SIM, "sim.toml")
    }
}

impl SimConfig {
    /// The plant equals the nominal model.
    pub fn ideal() -> Self {
        Self {
            drag: [0.0; 3],
            noise_ft_sigma: 0.0,
            motor_noise_coeff: 0.0,
            disturbance: [0.0; 3],
            ..Self::default()
        }
    }

    pub fn validate(&self, control_period: f64) -> Result<()> {
        if self
            .drag
            .iter()
            .chain([&self.noise_ft_sigma, &self.motor_noise_coeff])
            .any(|c| !(*c >= 0.0 && c.is_finite()))
        {
            return Err(Error::Config("drag and noise coefficients must be nonnegative".into()));
        }
        if self.disturbance.iter().any(|d| !d.is_finite()) {
            return Err(Error::Config("disturbance must be finite".into()));
        }
        if !(self.sim_dt > 0.0 && self.sim_dt <= control_period + 1e-15) {
            return Err(Error::Config(format!(
                "sim_dt {} must lie in (0, {control_period}]",
                self.sim_dt
            )));
        }
        Ok(())
    }
}

/// Plant derivative: nominal rigid body, body-frame drag, constant offsets.
pub fn plant_derivative(
    x: &Vector,
    u: &Vector,
    params: &QuadParams,
    drag: &[f64; 3],
    accel_offset: &Vector3<f64>,
    torque_offset: &Vector3<f64>,
) -> Vector {
    let mut d = nominal_derivative(x, u, params);
    let r = rotation_matrix(&[x[3], x[4], x[5], x[6]]);
    let v = Vector3::new(x[VEL], x[VEL + 1], x[VEL + 2]);
    let v_b = r.transpose() * v;
    let drag_w = r * Vector3::new(-drag[0] * v_b.x, -drag[1] * v_b.y, -drag[2] * v_b.z);
    for i in 0..3 {
        d[VEL + i] += drag_w[i] + accel_offset[i];
        d[RATE + i] += torque_offset[i];
    }
    d
}

/// Simplified quadrotor plant with drag and noise, seeded.
#[derive(Debug, Clone)]
pub struct Simulator {
    params: QuadParams,
    config: SimConfig,
    rng: ChaCha8Rng,
    accel_offset: Vector3<f64>,
    torque_offset: Vector3<f64>,
}

impl Simulator {
    pub fn new(params: QuadParams, config: SimConfig) -> Result<Self> {
        params.validate()?;
        let mut s = Self {
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            params,
            config,
            accel_offset: Vector3::zeros(),
            torque_offset: Vector3::zeros(),
        };
        s.draw_offsets();
        Ok(s)
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn params(&self) -> &QuadParams {
        &self.params
    }

    /// Current `(force, torque)` offsets.
    pub fn offsets(&self) -> (Vector3<f64>, Vector3<f64>) {
        (self.accel_offset, self.torque_offset)
    }

    fn gaussian(&mut self, sigma: f64) -> f64 {
        if sigma == 0.0 {
            0.0
        } else {
            sigma * self.rng.sample::<f64, _>(StandardNormal)
        }
    }

    fn draw_offsets(&mut self) {
        let s = self.config.noise_ft_sigma;
        let a = Vector3::new(self.gaussian(s), self.gaussian(s), self.gaussian(s));
        let t = Vector3::new(self.gaussian(s), self.gaussian(s), self.gaussian(s));
        self.accel_offset = a + Vector3::from(self.config.disturbance);
        self.torque_offset = t;
    }

    /// Advance `x` by `duration` under command `u`, sub-stepping at `sim_dt`.
    /// Motor noise is drawn once per call; in step mode so are the offsets.
    pub fn simulate_step(&mut self, x: &Vector, u: &Vector, duration: f64) -> Result<Vector> {
        if x.len() != STATE_DIM {
            return Err(Error::shape("simulator state", STATE_DIM, x.len()));
        }
        if u.len() != INPUT_DIM {
            return Err(Error::shape("simulator input", INPUT_DIM, u.len()));
        }
        if !(duration > 0.0 && duration.is_finite()) {
            return Err(Error::InputDomain(format!("step duration {duration} must be positive")));
        }
        if self.config.noise_mode == NoiseMode::Step {
            self.draw_offsets();
        }
        let coeff = self.config.motor_noise_coeff;
        let mut applied = u.clone();
        for t in applied.iter_mut() {
            let sigma = coeff * t.max(0.0).sqrt();
            *t = (*t + self.gaussian(sigma)).max(0.0);
        }
        let steps = ((duration / self.config.sim_dt).round() as usize).max(1);
        let h = duration / steps as f64;
        let (a_off, t_off) = (self.accel_offset, self.torque_offset);
        let mut counts = EvalCounts::default();
        let mut state = x.clone();
        for _ in 0..steps {
            state = rk4_step(
                |xx, uu| plant_derivative(xx, uu, &self.params, &self.config.drag, &a_off, &t_off),
                &state,
                &applied,
                h,
                &mut counts,
            )?;
            normalize_quaternion(&mut state);
        }
        Ok(state)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::quad::{QuadModel, QuadState, RotorThrusts};
    use crate::dynamics::Dynamics;
    use nalgebra::UnitQuaternion;

    fn state(v: [f64; 3], q: UnitQuaternion<f64>) -> Vector {
        QuadState::new(Vector3::new(0.0, 0.0, 2.0), *q.quaternion(), Vector3::from(v), Vector3::zeros())
            .unwrap()
            .to_vector()
    }

    #[test]
    fn ideal_plant_matches_nominal_rk4() {
        let p = QuadParams::default();
        let model = QuadModel::new(p.clone()).unwrap();
        let mut sim = Simulator::new(p.clone(), SimConfig::ideal()).unwrap();
        let q = UnitQuaternion::from_euler_angles(0.1, -0.2, 0.3);
        let x = state([1.0, -2.0, 0.5], q);
        let u = Vector::from_column_slice(&[2.0, 1.5, 2.2, 1.9]);
        let got = sim.simulate_step(&x, &u, 0.01).unwrap();
        let mut expected = x.clone();
        let mut counts = EvalCounts::default();
        for _ in 0..10 {
            expected = rk4_step(|a, b| model.eval(a, b), &expected, &u, 0.001, &mut counts).unwrap();
            model.normalize(&mut expected);
        }
        assert!((got - expected).amax() < 1e-9);
    }

    #[test]
    fn no_drag_force_at_rest() {
        let p = QuadParams::default();
        let cfg = SimConfig { noise_ft_sigma: 0.0, motor_noise_coeff: 0.0, ..SimConfig::default() };
        let x = QuadState::hover_at(Vector3::new(0.0, 0.0, 1.0)).to_vector();
        let u = RotorThrusts::hover(&p).to_vector();
        let d = plant_derivative(&x, &u, &p, &cfg.drag, &Vector3::zeros(), &Vector3::zeros());
        assert!(d.amax() < 1e-12);
        let mut sim = Simulator::new(p, cfg).unwrap();
        assert!((sim.simulate_step(&x, &u, 0.01).unwrap() - &x).amax() < 1e-12);
    }

    #[test]
    fn forward_flight_force_balance() {
        // Solve pitch and collective thrust holding a constant 6 m/s along x.
        let p = QuadParams::default();
        let drag = [0.3, 0.3, 0.15];
        let v = 6.0;
        let (mut theta, mut thrust) = (0.0_f64, p.mass * 9.81);
        for _ in 0..100 {
            // Drag in body axes of a pitched frame, rotated back to world.
            let (s, c) = theta.sin_cos();
            let vb = (c * v, s * v);
            let (dbx, dbz) = (-drag[0] * vb.0, -drag[2] * vb.1);
            let dw = (c * dbx + s * dbz, -s * dbx + c * dbz);
            let need = (-dw.0, 9.81 - dw.1);
            theta = need.0.atan2(need.1);
            thrust = p.mass * (need.0 * need.0 + need.1 * need.1).sqrt();
        }
        let q = UnitQuaternion::from_axis_angle(&Vector3::y_axis(), theta);
        let x = state([v, 0.0, 0.0], q);
        let u = Vector::from_element(4, thrust / 4.0);
        let d = plant_derivative(&x, &u, &p, &drag, &Vector3::zeros(), &Vector3::zeros());
        assert!(d.rows(VEL, 3).amax() < 1e-10, "{}", d.rows(VEL, 3));
        assert!(d.rows(RATE, 3).amax() < 1e-12);
        assert!(theta > 0.0 && thrust > p.mass * 9.81);
    }

    #[test]
    fn kinetic_energy_decays_under_drag() {
        let p = QuadParams::default();
        let cfg = SimConfig { noise_ft_sigma: 0.0, motor_noise_coeff: 0.0, ..SimConfig::default() };
        let mut sim = Simulator::new(p, cfg).unwrap();
        let mut x = state([3.0, -2.0, 1.0], UnitQuaternion::from_euler_angles(0.2, 0.1, -0.4));
        let u = Vector::zeros(4);
        // Mechanical energy per unit mass; gravity is conservative.
        let energy = |x: &Vector| 0.5 * x.rows(VEL, 3).norm_squared() + 9.81 * x[2];
        let mut prev = energy(&x);
        for _ in 0..50 {
            x = sim.simulate_step(&x, &u, 0.01).unwrap();
            let e = energy(&x);
            assert!(e <= prev + 1e-9, "{e} > {prev}");
            prev = e;
        }
    }

    #[test]
    fn seeded_noise_is_reproducible() {
        let p = QuadParams::default();
        let x = QuadState::hover_at(Vector3::zeros()).to_vector();
        let u = RotorThrusts::hover(&p).to_vector();
        let run = |mode| {
            let cfg = SimConfig { noise_mode: mode, seed: 9, ..SimConfig::default() };
            let mut sim = Simulator::new(p.clone(), cfg).unwrap();
            let mut s = x.clone();
            for _ in 0..20 {
                s = sim.simulate_step(&s, &u, 0.01).unwrap();
            }
            s
        };
        for mode in [NoiseMode::Episode, NoiseMode::Step] {
            assert_eq!(run(mode), run(mode));
        }
        assert_ne!(run(NoiseMode::Episode), run(NoiseMode::Step));
    }

    #[test]
    fn episode_offsets_are_constant() {
        let p = QuadParams::default();
        let mut sim = Simulator::new(p.clone(), SimConfig::default()).unwrap();
        let before = sim.offsets();
        let x = QuadState::hover_at(Vector3::zeros()).to_vector();
        sim.simulate_step(&x, &RotorThrusts::hover(&p).to_vector(), 0.01).unwrap();
        assert_eq!(sim.offsets(), before);
        assert!(before.0.norm() > 0.0);
    }

    #[test]
    fn invalid_config_rejected() {
        let cfg = SimConfig { sim_dt: 0.02, ..SimConfig::default() };
        assert!(cfg.validate(0.01).is_err());
        let cfg = SimConfig { drag: [-0.1, 0.0, 0.0], ..SimConfig::default() };
        assert!(cfg.validate(0.01).is_err());
        SimConfig::default().validate(0.01).unwrap();
    }
}
