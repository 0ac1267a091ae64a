use serde::{Deserialize, Serialize};

use crate::config::{embedded, OCP_DOUBLE_INTEGRATOR, OCP_QUAD};
use crate::dynamics::residual::ResidualVariant;
use crate::error::{Error, Result};

/// How the residual network enters the QP.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Through per-node Taylor approximations prepared in one batched call.
    Rtn,
    /// Network value and Jacobian evaluated inside every RK4 stage.
    Naive,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Rtn => "rtn",
            Mode::Naive => "naive",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "rtn" => Ok(Mode::Rtn),
            "naive" => Ok(Mode::Naive),
            _ => Err(Error::Config(format!("unknown mode {s:?} (expected rtn or naive)"))),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Stage cost `|x - x_r|^2_Q + |u - u_r|^2_R`, terminal cost `|x_N - x_r|^2_Q`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OcpConfig {
    pub horizon: usize,
    pub dt: f64,
    /// Time between controller calls; the warm start shifts by
    /// `control_period / dt` nodes. Defaults to `dt`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control_period: Option<f64>,
    pub state_weights: Vec<f64>,
    pub input_weights: Vec<f64>,
    pub u_min: Vec<f64>,
    pub u_max: Vec<f64>,
    pub mode: Mode,
    pub residual_variant: ResidualVariant,
    pub taylor_order: u8,
}

impl OcpConfig {
    pub fn quad_default() -> Self {
        embedded(OCP_QUAD, "ocp_quad.toml")
    }

    pub fn double_integrator_default() -> Self {
        embedded(OCP_DOUBLE_INTEGRATOR, "ocp_double_integrator.toml")
    }

    pub fn control_period(&self) -> f64 {
        self.control_period.unwrap_or(self.dt)
    }

    /// Fraction of a node the warm start advances per cycle.
    pub fn shift_fraction(&self) -> f64 {
        self.control_period() / self.dt
    }

    pub fn validate(&self, nx: usize, nu: usize) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        let cp = self.control_period();
        if !(cp > 0.0 && cp <= self.dt) {
            return Err(Error::Config(format!(
                "control_period {cp} must lie in (0, dt = {}]",
                self.dt
            )));
        }
        if self.state_weights.len() != nx {
            return Err(Error::shape("state_weights", nx, self.state_weights.len()));
        }
        for (name, v) in [
            ("input_weights", &self.input_weights),
            ("u_min", &self.u_min),
            ("u_max", &self.u_max),
        ] {
            if v.len() != nu {
                return Err(Error::Config(format!("{name} has {} entries, expected {nu}", v.len())));
            }
        }
        if self.state_weights.iter().chain(&self.input_weights).any(|w| !(*w >= 0.0)) {
            return Err(Error::Config("cost weights must be nonnegative".into()));
        }
        if self.u_min.iter().zip(&self.u_max).any(|(lo, hi)| !(lo < hi)) {
            return Err(Error::Config("u_min must be strictly below u_max".into()));
        }
        if !(self.taylor_order == 1 || self.taylor_order == 2) {
            return Err(Error::Config(format!("taylor_order must be 1 or 2, got {}", self.taylor_order)));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let q = OcpConfig::quad_default();
        q.validate(13, 4).unwrap();
        assert_eq!(q.horizon, 10);
        assert!((q.shift_fraction() - 0.1).abs() < 1e-15);
        let d = OcpConfig::double_integrator_default();
        d.validate(2, 1).unwrap();
        assert_eq!(d.shift_fraction(), 1.0);
        assert_eq!(d.residual_variant, ResidualVariant::DiState);
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut c = OcpConfig::double_integrator_default();
        c.u_min = vec![5.0];
        c.u_max = vec![5.0];
        assert!(c.validate(2, 1).is_err());
        let mut c = OcpConfig::double_integrator_default();
        c.horizon = 0;
        assert!(c.validate(2, 1).is_err());
        let mut c = OcpConfig::double_integrator_default();
        c.state_weights[0] = -1.0;
        assert!(c.validate(2, 1).is_err());
        assert!(OcpConfig::double_integrator_default().validate(3, 1).is_err());
        assert!(Mode::parse("fast").is_err());
    }
}
