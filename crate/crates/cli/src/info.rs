use std::path::PathBuf;

use clap::Args;

use neural_mpc::neural::io::read_sidecar;
use neural_mpc::{OcpConfig, QuadParams};

use crate::{CliError, CliResult};

#[derive(Debug, Clone, Args)]
pub struct InfoArgs {
    /// Describe this model file.
    #[arg(long, value_name = "FILE")]
    pub model: Option<PathBuf>,
}

/// Prints to stdout only; writes no files and hence no manifest.
pub fn execute(args: &InfoArgs) -> CliResult<()> {
    println!("nmpc {}", env!("CARGO_PKG_VERSION"));
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    println!("available threads: {threads}");
    let quad = QuadParams::default();
    let ocp = OcpConfig::quad_default();
    println!(
        "default quadrotor: mass {} kg, thrust limit {} N per rotor, hover {:.4} N",
        quad.mass,
        quad.u_max,
        quad.hover_thrust()
    );
    println!(
        "default controller: N = {}, dt = {} s, control period {} s, mode {}, variant {}",
        ocp.horizon,
        ocp.dt,
        ocp.control_period(),
        ocp.mode,
        ocp.residual_variant
    );
    if let Some(p) = &args.model {
        let sidecar = read_sidecar(p)
            .map_err(|e| CliError::usage(format!("cannot read model description of {}: {e}", p.display())))?;
        let text = serde_json::to_string_pretty(&sidecar).map_err(CliError::runtime)?;
        println!("{text}");
    }
    Ok(())
}
