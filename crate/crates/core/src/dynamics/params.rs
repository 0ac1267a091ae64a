use serde::{Deserialize, Serialize};

use crate::config;
use crate::error::{Error, Result};

/// Physical quadrotor constants. Loaded from `configs/quad.toml`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadParams {
    /// kg
    pub mass: f64,
    /// Diagonal inertia, kg m^2.
    pub inertia: [f64; 3],
    /// Hub to rotor distance, m.
    pub arm_length: f64,
    /// Rotor drag torque per unit thrust, m.
    pub kappa: f64,
    /// Per-rotor thrust limit, N.
    pub u_max: f64,
    /// Spin direction of each rotor, +1 or -1.
    pub rotor_sign: [f64; 4],
}

impl Default for QuadParams {
    fn default() -> Self {
        config::embedded(config::QUAD, "quad.toml")
    }
}

impl QuadParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("mass", self.mass),
            ("inertia[0]", self.inertia[0]),
            ("inertia[1]", self.inertia[1]),
            ("inertia[2]", self.inertia[2]),
            ("arm_length", self.arm_length),
            ("kappa", self.kappa),
            ("u_max", self.u_max),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.rotor_sign.iter().any(|s| *s != 1.0 && *s != -1.0) {
            return Err(Error::Config("rotor_sign entries must be +1 or -1".into()));
        }
        let plus = self.rotor_sign.iter().filter(|s| **s > 0.0).count();
        if plus != 2 {
            return Err(Error::Config(
                "rotor_sign needs two rotors of each spin direction".into(),
            ));
        }
        Ok(())
    }

    /// Per-rotor thrust that balances gravity.
    pub fn hover_thrust(&self) -> f64 {
        self.mass * -super::GRAVITY[2] / 4.0
    }
}
