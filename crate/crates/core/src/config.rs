//! Default configuration files. The TOML sources live in `configs/` at the
//! repository root and are embedded at compile time, so library defaults and
//! the files the CLI reads can never drift apart.

use std::path::Path;

use serde::de::DeserializeOwned;

use crate::error::{Error, Result};

pub const QUAD: &str = include_str!("../../../configs/quad.toml");
pub const OCP_QUAD: &str = include_str!("../../../configs/ocp_quad.toml");
pub const OCP_DOUBLE_INTEGRATOR: &str = include_str!("../../../configs/ocp_double_integrator.toml");
pub const SIM: &str = include_str!("../../../configs/sim.toml");
pub const TRAJECTORY: &str = include_str!("../../../configs/trajectory.toml");
pub const BENCH: &str = include_str!("../../../configs/bench.toml");
pub const TRAIN: &str = include_str!("../../../configs/train.toml");
pub const COLLECT: &str = include_str!("../../../configs/collect.toml");
pub const TRACK: &str = include_str!("../../../configs/track.toml");

/// Parse a TOML document, naming `what` in the error.
pub fn parse<T: DeserializeOwned>(text: &str, what: &str) -> Result<T> {
    toml::from_str(text).map_err(|e| Error::Config(format!("{what}: {e}")))
}

/// Read and parse a TOML file.
pub fn load<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    parse(&text, &path.display().to_string())
}

/// Parse an embedded default; these are compiled in and must always parse.
pub(crate) fn embedded<T: DeserializeOwned>(text: &str, what: &str) -> T {
    parse(text, what).unwrap_or_else(|e| panic!("embedded default {what} is invalid: {e}"))
}
