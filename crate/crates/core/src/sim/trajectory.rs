use std::f64::consts::TAU;

use nalgebra::{Matrix3, Quaternion, Rotation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::config::{embedded, TRAJECTORY};
use crate::dynamics::params::QuadParams;
use crate::dynamics::quad::STATE_DIM;
use crate::dynamics::GRAVITY;
use crate::error::{Error, Result};
use crate::sqp::ReferenceWindow;
use crate::Vector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrajectoryKind {
    Circle,
    Lemniscate,
}

impl TrajectoryKind {
    pub fn name(self) -> &'static str {
        match self {
            TrajectoryKind::Circle => "circle",
            TrajectoryKind::Lemniscate => "lemniscate",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "circle" => Ok(TrajectoryKind::Circle),
            "lemniscate" => Ok(TrajectoryKind::Lemniscate),
            _ => Err(Error::Config(format!("unknown trajectory {s:?} (expected circle or lemniscate)"))),
        }
    }
}

impl std::fmt::Display for TrajectoryKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryConfig {
    /// m
    pub circle_radius: f64,
    /// m
    pub lemniscate_scale: f64,
    /// Pacing along the lemniscate, in `[0, 0.5)`; 0 is a uniform curve parameter.
    pub lemniscate_speed_modulation: f64,
    /// m
    pub altitude: f64,
    /// Speed ramp-in duration, s.
    pub ramp_time: f64,
    /// Laps flown after the ramp.
    pub laps: f64,
}

impl Default for TrajectoryConfig {
    fn default() -> Self {
        embedded(TRAJECTORY, "trajectory.toml")
    }
}

/// Full-state reference sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSample {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub acceleration: Vector3<f64>,
    pub attitude: UnitQuaternion<f64>,
    pub body_rate: Vector3<f64>,
    /// Per-rotor thrust consistent with the reference acceleration.
    pub thrust: f64,
}

impl ReferenceSample {
    pub fn state(&self) -> Vector {
        let q = self.attitude.quaternion();
        let mut x = Vector::zeros(STATE_DIM);
        x.fixed_rows_mut::<3>(0).copy_from(&self.position);
        x[3] = q.w;
        x[4] = q.i;
        x[5] = q.j;
        x[6] = q.k;
        x.fixed_rows_mut::<3>(7).copy_from(&self.velocity);
        x.fixed_rows_mut::<3>(10).copy_from(&self.body_rate);
        x
    }

    pub fn input(&self) -> Vector {
        Vector::from_element(4, self.thrust)
    }
}

/// A closed planar track at fixed altitude, entered with a smooth speed ramp.
/// The average speed over a lap equals `speed`. The circle is flown at
/// constant speed; on the lemniscate the speed varies along the lap.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub kind: TrajectoryKind,
    pub speed: f64,
    pub config: TrajectoryConfig,
    mass: f64,
    lap_length: f64,
}

impl Trajectory {
    pub fn new(kind: TrajectoryKind, speed: f64, config: TrajectoryConfig, params: &QuadParams) -> Result<Self> {
        if !(speed > 0.0 && speed.is_finite()) {
            return Err(Error::Config(format!("speed must be positive, got {speed}")));
        }
        let scale = match kind {
            TrajectoryKind::Circle => config.circle_radius,
            TrajectoryKind::Lemniscate => config.lemniscate_scale,
        };
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::Config(format!("{kind} scale must be positive, got {scale}")));
        }
        if !(config.ramp_time >= 0.0 && config.laps > 0.0 && config.altitude.is_finite()) {
            return Err(Error::Config("ramp_time must be nonnegative and laps positive".into()));
        }
        if !(0.0..0.5).contains(&config.lemniscate_speed_modulation) {
            return Err(Error::Config("lemniscate_speed_modulation must lie in [0, 0.5)".into()));
        }
        let mut t = Self {
            kind,
            speed,
            config,
            mass: params.mass,
            lap_length: 0.0,
        };
        t.lap_length = t.measure_lap();
        Ok(t)
    }

    fn measure_lap(&self) -> f64 {
        // Composite Simpson on |dp/dtheta|.
        let n = 20_000;
        let h = TAU / n as f64;
        let f = |i: usize| self.curve(i as f64 * h).1.norm();
        let mut s = f(0) + f(n);
        for i in 1..n {
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i);
        }
        s * h / 3.0
    }

    pub fn lap_length(&self) -> f64 {
        self.lap_length
    }

    /// Time for one lap at full speed.
    pub fn lap_period(&self) -> f64 {
        self.lap_length / self.speed
    }

    pub fn ramp_time(&self) -> f64 {
        self.config.ramp_time
    }

    pub fn duration(&self) -> f64 {
        self.config.ramp_time + self.config.laps * self.lap_period()
    }

    /// `(p, dp/dtheta, d2p/dtheta2)` of the planar curve.
    fn curve(&self, th: f64) -> (Vector3<f64>, Vector3<f64>, Vector3<f64>) {
        let z = self.config.altitude;
        match self.kind {
            TrajectoryKind::Circle => {
                let r = self.config.circle_radius;
                let (s, c) = th.sin_cos();
                (
                    Vector3::new(r * c, r * s, z),
                    Vector3::new(-r * s, r * c, 0.0),
                    Vector3::new(-r * c, -r * s, 0.0),
                )
            }
            TrajectoryKind::Lemniscate => {
                let a = self.config.lemniscate_scale;
                let p = |t: f64| {
                    let (s, c) = t.sin_cos();
                    let d = 1.0 + s * s;
                    Vector3::new(a * c / d, a * s * c / d, z)
                };
                let h = 1e-3;
                let (p2m, p1m, p0, p1p, p2p) = (p(th - 2.0 * h), p(th - h), p(th), p(th + h), p(th + 2.0 * h));
                let d1 = (p2m - p1m * 8.0 + p1p * 8.0 - p2p) / (12.0 * h);
                let d2 = (-p2m + p1m * 16.0 - p0 * 30.0 + p1p * 16.0 - p2p) / (12.0 * h * h);
                (p0, d1, d2)
            }
        }
    }

    /// Curve parameter and its first two time derivatives. The uniform
    /// phase advances `2 pi` per lap at full speed.
    fn phase(&self, t: f64) -> (f64, f64, f64) {
        let (v, tr) = (self.speed, self.config.ramp_time);
        let k = TAU / self.lap_length;
        let (s, sd, sdd) = if t <= 0.0 {
            (0.0, 0.0, 0.0)
        } else if t < tr {
            let x = t / tr;
            (
                v * tr * (x.powi(3) - 0.5 * x.powi(4)),
                v * (3.0 * x * x - 2.0 * x.powi(3)),
                v * 6.0 * x * (1.0 - x) / tr,
            )
        } else {
            (v * (0.5 * tr + (t - tr)), v, 0.0)
        };
        let (phi, phid, phidd) = (k * s, k * sd, k * sdd);
        match self.kind {
            TrajectoryKind::Circle => (phi, phid, phidd),
            TrajectoryKind::Lemniscate => {
                let m = self.config.lemniscate_speed_modulation;
                let (s2, c2) = (2.0 * phi).sin_cos();
                let g = 1.0 - 2.0 * m * c2;
                (phi - m * s2, phid * g, phidd * g + 4.0 * m * phid * phid * s2)
            }
        }
    }

    fn kinematics(&self, t: f64) -> (Vector3<f64>, Vector3<f64>, Vector3<f64>) {
        let (th, thd, thdd) = self.phase(t);
        let (p, d1, d2) = self.curve(th);
        (p, d1 * thd, d2 * thd * thd + d1 * thdd)
    }

    /// Thrust-aligned attitude with zero yaw.
    fn attitude(acc: &Vector3<f64>) -> UnitQuaternion<f64> {
        let f = acc - Vector3::from(GRAVITY);
        let zb = f.normalize();
        let xc = Vector3::x();
        let yb = zb.cross(&xc).normalize();
        let xb = yb.cross(&zb);
        let rot = Rotation3::from_matrix_unchecked(Matrix3::from_columns(&[xb, yb, zb]));
        let q = UnitQuaternion::from_rotation_matrix(&rot);
        if q.w < 0.0 {
            UnitQuaternion::new_unchecked(-q.into_inner())
        } else {
            q
        }
    }

    fn sample_unchecked(&self, t: f64) -> ReferenceSample {
        let (p, v, a) = self.kinematics(t);
        let q = Self::attitude(&a);
        // Body rate from the attitude derivative: omega = 2 vec(q* dq/dt).
        let h = 1e-5;
        let qp = Self::attitude(&self.kinematics(t + h).2).into_inner();
        let qm = Self::attitude(&self.kinematics(t - h).2).into_inner();
        let qd: Quaternion<f64> = (qp - qm) / (2.0 * h);
        let w = q.into_inner().conjugate() * qd * 2.0;
        let thrust = self.mass * (a - Vector3::from(GRAVITY)).norm() / 4.0;
        ReferenceSample {
            position: p,
            velocity: v,
            acceleration: a,
            attitude: q,
            body_rate: w.imag(),
            thrust,
        }
    }

    /// Reference at time `t` in `[0, duration]`.
    pub fn reference(&self, t: f64) -> Result<ReferenceSample> {
        if !(t >= 0.0 && t <= self.duration() + 1e-9) {
            return Err(Error::InputDomain(format!(
                "time {t} outside the trajectory [0, {}]",
                self.duration()
            )));
        }
        Ok(self.sample_unchecked(t))
    }

    /// State and input references at `t + k dt`. The track is periodic, so
    /// the window may look past the end of the flight.
    pub fn window(&self, t: f64, horizon: usize, dt: f64) -> ReferenceWindow {
        let samples: Vec<ReferenceSample> = (0..=horizon).map(|k| self.sample_unchecked(t + k as f64 * dt)).collect();
        ReferenceWindow {
            xs: samples.iter().map(|s| s.state()).collect(),
            us: samples[..horizon].iter().map(|s| s.input()).collect(),
        }
    }

    /// Hover at the start point.
    pub fn initial_state(&self) -> Vector {
        self.sample_unchecked(0.0).state()
    }

    /// Largest speed over one full-speed lap, sampled.
    pub fn max_speed(&self) -> f64 {
        let t0 = self.config.ramp_time;
        let n = 2000;
        (0..n)
            .map(|i| self.kinematics(t0 + self.lap_period() * i as f64 / n as f64).1.norm())
            .fold(0.0, f64::max)
    }
}
